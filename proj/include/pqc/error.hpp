#pragma once

#include <stdexcept>
#include <string>

namespace pqc {

// Root of every error the library raises. Subclasses name the failure so
// callers and tests can catch precisely; the CLI maps them all to a data
// error exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PQC_DEFINE_ERROR(Name)             \
  class Name : public Error {              \
   public:                                 \
    explicit Name(const std::string& what) \
        : Error(#Name ": " + what) {}      \
  };

// tensor core
PQC_DEFINE_ERROR(ShapeMismatch)
PQC_DEFINE_ERROR(DomainError)
PQC_DEFINE_ERROR(NonScalarLoss)
PQC_DEFINE_ERROR(MissingGradient)
PQC_DEFINE_ERROR(NonCheckablePoint)
PQC_DEFINE_ERROR(MalformedTensorFile)
// audio
PQC_DEFINE_ERROR(MalformedWav)
PQC_DEFINE_ERROR(UnsupportedFormat)
PQC_DEFINE_ERROR(DegenerateSignal)
// image
PQC_DEFINE_ERROR(MalformedImage)
PQC_DEFINE_ERROR(UnsupportedChannels)
PQC_DEFINE_ERROR(OutOfBounds)
// corpus
PQC_DEFINE_ERROR(MalformedManifest)
PQC_DEFINE_ERROR(UnknownLabel)
PQC_DEFINE_ERROR(DuplicateId)
PQC_DEFINE_ERROR(MissingFile)
PQC_DEFINE_ERROR(EmptyClass)
PQC_DEFINE_ERROR(MissingView)
PQC_DEFINE_ERROR(InfeasibleSampling)
PQC_DEFINE_ERROR(InvalidConfig)
// training / checkpoints
PQC_DEFINE_ERROR(EmptyDataset)
PQC_DEFINE_ERROR(MalformedCheckpoint)

#undef PQC_DEFINE_ERROR

}  // namespace pqc
