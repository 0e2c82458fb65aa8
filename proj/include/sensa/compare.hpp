#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sensa/core.hpp"

namespace sensa {

/// Parameters by methods. Column m of `scaled` sums to 1; ranks are 1 for the
/// most important parameter, with ties sharing their average rank.
struct RankingTable {
  std::vector<std::string> params;
  std::vector<std::string> methods;
  Eigen::MatrixXd scaled;
  Eigen::MatrixXd ranks;

  std::size_t k() const noexcept { return params.size(); }
  std::size_t m() const noexcept { return methods.size(); }

  /// Columns are rescaled to unit sum; an all-zero column is rejected.
  static RankingTable from_columns(std::vector<std::string> params,
                                   std::vector<std::string> methods,
                                   const Eigen::MatrixXd& values);
  static RankingTable from_results(const std::vector<SensitivityResult>& results);
};

/// Descending average ranks: the largest value gets rank 1.
std::vector<double> average_ranks(std::span<const double> values);

struct Concordance {
  double w = 0.0;
  double chiSq = 0.0;
  double pValue = 1.0;
  std::size_t dof = 0;
};

/// Kendall's coefficient of concordance with the tie correction
/// W = 12 S / (m^2 (n^3 - n) - m T). The chi-square approximation uses
/// m (n - 1) W on n - 1 degrees of freedom.
Concordance kendalls_w(const RankingTable& table);

/// M x M correlation of the method columns (scaled values, or ranks when
/// `spearman`). Pairs involving a constant column are NaN, diagonal included.
Eigen::MatrixXd pairwise_correlation(const RankingTable& table, bool spearman = false);
inline Eigen::MatrixXd pairwise_pearson(const RankingTable& table) {
  return pairwise_correlation(table, false);
}

/// CSV: header "param,<method>...", one row per parameter, scaled values.
RankingTable read_ranking_csv(const std::filesystem::path& path);
void write_ranking_csv(const std::filesystem::path& path, const RankingTable& table);
/// Same layout with ranks instead of scaled values.
void write_rank_csv(const std::filesystem::path& path, const RankingTable& table);

}  // namespace sensa
