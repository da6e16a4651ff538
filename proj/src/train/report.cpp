#include <algorithm>
#include <cstdio>
#include <sstream>

#include "pqc/train.hpp"

namespace pqc::train {
namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

}  // namespace

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) {
    for (std::size_t v : row) n += v;
  }
  return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  for (std::size_t i = 0; i < kClasses; ++i) {
    for (std::size_t j = 0; j < kClasses; ++j) counts[i][j] += o.counts[i][j];
  }
  return *this;
}

double accuracy(const ConfusionMatrix& m) {
  const std::size_t total = m.total();
  if (total == 0) throw EmptyDataset("accuracy of an empty confusion matrix");
  std::size_t diag = 0;
  for (std::size_t i = 0; i < kClasses; ++i) diag += m.counts[i][i];
  return static_cast<double>(diag) / static_cast<double>(total);
}

std::size_t argmax_class(const float* scores, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < n; ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  return best;
}

std::string format_report(const ReportHeader& header, const std::vector<ReportRow>& rows,
                          const std::vector<TitledMatrix>& matrices) {
  std::ostringstream os;
  for (const auto& [k, v] : header) os << "# " << k << " = " << v << '\n';
  if (!header.empty()) os << '\n';

  const bool factors = std::any_of(rows.begin(), rows.end(),
                                   [](const ReportRow& r) { return !r.factors.empty(); });
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{"model"};
  if (factors) head.push_back("factors");
  head.insert(head.end(), {"strategy", "samples", "accuracy"});
  cells.push_back(head);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.model};
    if (factors) line.push_back(r.factors.empty() ? "-" : r.factors);
    line.push_back(r.strategy.empty() ? "-" : r.strategy);
    line.push_back(std::to_string(r.samples));
    line.push_back(fixed2(r.accuracy));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  for (const auto& line : cells) {
    std::string out;
    for (std::size_t i = 0; i < line.size(); ++i) {
      out += i + 1 < line.size() ? pad(line[i], width[i] + 2) : line[i];
    }
    os << out << '\n';
  }

  for (const auto& tm : matrices) {
    os << "\nconfusion matrix (row-normalized): " << tm.title << '\n';
    os << pad("actual\\pred", 13);
    for (std::size_t c = 0; c < kClasses; ++c) {
      os << pad(std::string(corpus::label_token(corpus::Label(c))), 6);
    }
    os << "n\n";
    for (std::size_t i = 0; i < kClasses; ++i) {
      os << pad(std::string(corpus::label_token(corpus::Label(i))), 13);
      std::size_t n = 0;
      for (std::size_t v : tm.matrix.counts[i]) n += v;
      for (std::size_t j = 0; j < kClasses; ++j) {
        os << pad(n ? fixed2(static_cast<double>(tm.matrix.counts[i][j]) / n) : "-", 6);
      }
      os << n << '\n';
    }
  }
  return os.str();
}

std::string format_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "model,factors,strategy,samples,accuracy\n";
  for (const auto& r : rows) {
    os << r.model << ',' << r.factors << ',' << r.strategy << ',' << r.samples << ','
       << fixed2(r.accuracy) << '\n';
  }
  return os.str();
}

std::string format_loss_trace(const std::vector<double>& epoch_loss) {
  std::ostringstream os;
  os << "epoch,loss\n";
  char buf[48];
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", e + 1, epoch_loss[e]);
    os << buf;
  }
  return os.str();
}

}  // namespace pqc::train
