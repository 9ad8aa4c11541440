#include "elicit/data_ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "elicit/serialization.hpp"

namespace elicit {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return in;
}

[[noreturn]] void fail(const std::string& path, std::size_t line, const std::string& what) {
  throw ParseError(path + ": line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_index(const std::string& s, std::size_t& out) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) return false;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), nullptr, 10);
  if (errno != 0) return false;
  out = static_cast<std::size_t>(v);
  return true;
}

bool is_blank(const std::string& line) { return trim(line).empty(); }

Dataset load_dense_csv(const std::string& path, const std::string& target) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    header = split_csv(line);
    break;
  }
  if (header.empty()) throw ParseError(path + ": empty file");

  std::set<std::string> seen;
  std::size_t target_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].empty()) fail(path, line_no, "empty header name in column " + std::to_string(c + 1));
    if (!seen.insert(header[c]).second) fail(path, line_no, "duplicate header name '" + header[c] + "'");
    if (header[c] == target) target_col = c;
  }
  if (target_col == header.size()) fail(path, line_no, "missing target column '" + target + "'");

  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != target_col) names.push_back(header[c]);
  }

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      fail(path, line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                              std::to_string(cells.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!parse_double(cells[c], row[c])) {
        fail(path, line_no, "non-numeric cell '" + cells[c] + "' in column '" + header[c] + "'");
      }
    }
    rows.push_back(std::move(row));
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  MatrixXd x(n, static_cast<Eigen::Index>(names.size()));
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index k = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == target_col) {
        y(i) = rows[static_cast<std::size_t>(i)][c];
      } else {
        x(i, k++) = rows[static_cast<std::size_t>(i)][c];
      }
    }
  }
  return Dataset(std::move(x), std::move(y), std::move(names));
}

Dataset load_sparse_triplet(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  struct Entry {
    std::size_t row, col;
    double value;
  };
  std::vector<Entry> entries;
  std::map<std::size_t, double> targets;
  std::size_t max_row = 0;
  std::size_t max_col = 0;
  bool any_feature = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto cells = split_csv(line);
    if (!have_header) {
      if (cells != std::vector<std::string>{"row", "col", "value"}) {
        fail(path, line_no, "expected header 'row,col,value'");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != 3) fail(path, line_no, "expected 3 cells, found " + std::to_string(cells.size()));
    std::size_t r = 0;
    double v = 0.0;
    if (!parse_index(cells[0], r)) fail(path, line_no, "row index '" + cells[0] + "' is not a non-negative integer");
    if (!parse_double(cells[2], v)) fail(path, line_no, "non-numeric value '" + cells[2] + "'");
    max_row = std::max(max_row, r);
    if (cells[1] == "target") {
      if (!targets.emplace(r, v).second) fail(path, line_no, "second target for row " + cells[0]);
      continue;
    }
    std::size_t c = 0;
    if (!parse_index(cells[1], c)) fail(path, line_no, "col '" + cells[1] + "' is neither an index nor 'target'");
    max_col = std::max(max_col, c);
    any_feature = true;
    entries.push_back({r, c, v});
  }
  if (!have_header) throw ParseError(path + ": empty file");
  if (targets.empty()) throw ParseError(path + ": missing target entries (col = target)");
  if (!any_feature) throw ParseError(path + ": no feature entries");

  const auto n = static_cast<Eigen::Index>(max_row + 1);
  const auto m = static_cast<Eigen::Index>(max_col + 1);
  MatrixXd x = MatrixXd::Zero(n, m);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto it = targets.find(static_cast<std::size_t>(i));
    if (it == targets.end()) throw ParseError(path + ": row " + std::to_string(i) + " has no target");
    y(i) = it->second;
  }
  for (const auto& e : entries) {
    x(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) += e.value;
  }
  return Dataset(std::move(x), std::move(y), default_feature_names(static_cast<std::size_t>(m)));
}

}  // namespace

MatrixFormat parse_matrix_format(const std::string& s) {
  if (s == "dense-csv") return MatrixFormat::DenseCsv;
  if (s == "sparse-triplet") return MatrixFormat::SparseTriplet;
  throw ValidationError("unknown matrix format '" + s + "'");
}

Dataset load_matrix(const std::string& path, MatrixFormat format, const std::string& target) {
  return format == MatrixFormat::DenseCsv ? load_dense_csv(path, target) : load_sparse_triplet(path);
}

std::vector<Document> read_corpus_tsv(const std::string& path) {
  auto in = open_input(path);
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(path, line_no, "expected rating<TAB>text");
    Document d;
    const std::string rating = trim(line.substr(0, tab));
    if (!parse_double(rating, d.rating)) fail(path, line_no, "non-numeric rating '" + rating + "'");
    d.text = line.substr(tab + 1);
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream ss(text);
  std::string word;
  while (ss >> word) {
    std::string t;
    for (unsigned char c : word) {
      if (std::isalnum(c)) t.push_back(static_cast<char>(std::tolower(c)));
    }
    if (!t.empty()) tokens.push_back(std::move(t));
  }
  return tokens;
}

Dataset vectorize_corpus(const std::vector<Document>& docs, std::size_t min_count, TokenFilter filter) {
  if (docs.empty()) throw ValidationError("vectorize corpus: empty corpus");

  std::vector<std::unordered_map<std::string, double>> counts(docs.size());
  std::map<std::string, std::size_t> support;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (auto& tok : tokenize(docs[i].text)) counts[i][tok] += 1.0;
    for (const auto& [tok, c] : counts[i]) {
      support[tok] += filter == TokenFilter::DocumentFrequency ? 1 : static_cast<std::size_t>(c);
    }
  }

  std::vector<std::string> vocab;
  for (const auto& [tok, s] : support) {
    if (s >= min_count) vocab.push_back(tok);
  }
  if (vocab.empty()) throw ValidationError("vectorize corpus: vocabulary is empty after filtering");

  std::unordered_map<std::string, Eigen::Index> column;
  for (std::size_t k = 0; k < vocab.size(); ++k) column.emplace(vocab[k], static_cast<Eigen::Index>(k));

  const auto n = static_cast<Eigen::Index>(docs.size());
  MatrixXd x = MatrixXd::Zero(n, static_cast<Eigen::Index>(vocab.size()));
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& doc = counts[static_cast<std::size_t>(i)];
    for (const auto& [tok, c] : doc) {
      const auto it = column.find(tok);
      if (it != column.end()) x(i, it->second) = c;
    }
    y(i) = docs[static_cast<std::size_t>(i)].rating;
  }
  return Dataset(std::move(x), std::move(y), std::move(vocab));
}

Dataset NormStats::apply(const Dataset& d) const {
  if (static_cast<std::size_t>(mean.size()) != d.m() || static_cast<std::size_t>(std.size()) != d.m()) {
    throw ValidationError("norm stats: width does not match dataset");
  }
  MatrixXd x = (d.x().rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
  return Dataset(std::move(x), d.y(), d.feature_names());
}

NormStats compute_norm_stats(const MatrixXd& x) {
  if (x.rows() == 0) throw ValidationError("norm stats: no rows");
  NormStats s;
  s.mean = x.colwise().mean().transpose();
  s.std.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - s.mean(c)).square().mean();
    s.std(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Partition partition_and_normalize(const Dataset& data, std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  if (n_train + n_test > data.n()) {
    throw ValidationError("partition: n_train + n_test = " + std::to_string(n_train + n_test) + " exceeds n = " +
                          std::to_string(data.n()));
  }
  std::vector<std::size_t> order(data.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Partition p;
  p.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  p.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                     order.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
  p.pool_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_test), order.end());

  std::vector<std::size_t> fit_rows = p.train_rows;
  fit_rows.insert(fit_rows.end(), p.pool_rows.begin(), p.pool_rows.end());
  if (fit_rows.empty()) throw ValidationError("partition: train and user pool are both empty");
  p.stats = compute_norm_stats(data.rows(fit_rows).x());

  p.train = p.stats.apply(data.rows(p.train_rows));
  p.test = p.stats.apply(data.rows(p.test_rows));
  p.user_pool = p.stats.apply(data.rows(p.pool_rows));
  return p;
}

nlohmann::json to_json(const NormStats& s) {
  return json{{"format", "elicit.norm_stats"},
              {"version", kFormatVersion},
              {"mean", vector_to_json(s.mean)},
              {"std", vector_to_json(s.std)}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
  check_envelope(j, "norm_stats");
  NormStats s{vector_from_json(j.at("mean")), vector_from_json(j.at("std"))};
  if (s.mean.size() != s.std.size()) throw ValidationError("norm stats: mean and std differ in length");
  if ((s.std.array() <= 0.0).any()) throw ValidationError("norm stats: std must be positive");
  return s;
}

}  // namespace elicit
