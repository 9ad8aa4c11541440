#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "elicit/model.hpp"

namespace elicit {

/// Input file could not be parsed. The message names the line.
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

enum class MatrixFormat { DenseCsv, SparseTriplet };

MatrixFormat parse_matrix_format(const std::string& s);

/// Dense CSV: a header row of names, one of which is the target column.
/// Sparse triplet: header `row,col,value`; feature columns are integers and
/// the target of a row is given by an entry whose col is `target`.
Dataset load_matrix(const std::string& path, MatrixFormat format, const std::string& target = "y");

struct Document {
  std::string text;
  double rating = 0.0;
};

/// Reads `rating<TAB>text` lines. Blank lines are skipped.
std::vector<Document> read_corpus_tsv(const std::string& path);

/// Lowercased whitespace tokens with non-alphanumeric characters removed.
std::vector<std::string> tokenize(const std::string& text);

enum class TokenFilter {
  DocumentFrequency,  ///< keep tokens seen in at least `min_count` documents
  TotalCount,         ///< keep tokens seen at least `min_count` times overall
};

/// Bag-of-words counts over a sorted vocabulary; y holds the ratings.
Dataset vectorize_corpus(const std::vector<Document>& docs, std::size_t min_count,
                         TokenFilter filter = TokenFilter::DocumentFrequency);

/// Per-feature affine scaling (x - mean) / std.
struct NormStats {
  VectorXd mean;
  VectorXd std;

  Dataset apply(const Dataset& d) const;
};

NormStats compute_norm_stats(const MatrixXd& x);

struct Partition {
  Dataset train;
  Dataset test;
  Dataset user_pool;
  NormStats stats;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::vector<std::size_t> pool_rows;
};

/// Seeded disjoint split; every remaining row goes to the user pool. Scaling
/// is estimated on train and pool together and applied to all three parts.
Partition partition_and_normalize(const Dataset& data, std::size_t n_train, std::size_t n_test, std::uint64_t seed);

nlohmann::json to_json(const NormStats& s);
NormStats norm_stats_from_json(const nlohmann::json& j);

}  // namespace elicit
