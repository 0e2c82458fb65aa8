#include "sensa/compare.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "sensa/csv.hpp"

namespace sensa {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

RankingTable RankingTable::from_columns(std::vector<std::string> params,
                                        std::vector<std::string> methods,
                                        const Eigen::MatrixXd& values) {
  require(values.rows() == static_cast<Eigen::Index>(params.size()) &&
              values.cols() == static_cast<Eigen::Index>(methods.size()),
          ErrorKind::Structural, "ranking table shape does not match its labels");
  RankingTable t;
  t.params = std::move(params);
  t.methods = std::move(methods);
  t.scaled.resize(values.rows(), values.cols());
  t.ranks.resize(values.rows(), values.cols());
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    std::vector<double> col(values.col(c).data(), values.col(c).data() + values.rows());
    for (double v : col) {
      require(std::isfinite(v) && v >= 0.0, ErrorKind::Domain,
              "method " + t.methods[static_cast<std::size_t>(c)] +
                  " has a negative or non-finite importance");
    }
    const auto s = scale_to_unit_sum(col);
    const auto r = average_ranks(s);
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      t.scaled(i, c) = s[static_cast<std::size_t>(i)];
      t.ranks(i, c) = r[static_cast<std::size_t>(i)];
    }
  }
  return t;
}

RankingTable RankingTable::from_results(const std::vector<SensitivityResult>& results) {
  require(!results.empty(), ErrorKind::NoData, "no results to compare");
  const auto& params = results.front().params;
  std::vector<std::string> methods;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(params.size()),
                         static_cast<Eigen::Index>(results.size()));
  for (std::size_t m = 0; m < results.size(); ++m) {
    require(results[m].params == params, ErrorKind::Structural,
            "results cover different parameter lists");
    methods.emplace_back(to_string(results[m].method));
    for (std::size_t k = 0; k < params.size(); ++k) {
      values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = results[m].scaled[k];
    }
  }
  return from_columns(params, std::move(methods), values);
}

Concordance kendalls_w(const RankingTable& table) {
  const std::size_t n = table.k(), m = table.m();
  require(n >= 2, ErrorKind::InsufficientData, "Kendall's W needs at least two parameters");
  require(m >= 2, ErrorKind::InsufficientData, "Kendall's W needs at least two methods");
  const Eigen::VectorXd sums = table.ranks.rowwise().sum();
  const double md = static_cast<double>(m), nd = static_cast<double>(n);
  const double s = (sums.array() - sums.mean()).square().sum();

  double ties = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    std::vector<double> r(table.ranks.col(static_cast<Eigen::Index>(c)).data(),
                          table.ranks.col(static_cast<Eigen::Index>(c)).data() + n);
    std::sort(r.begin(), r.end());
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && r[j + 1] == r[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      ties += t * t * t - t;
      i = j + 1;
    }
  }
  Concordance c;
  const double denom = md * md * (nd * nd * nd - nd) - md * ties;
  // Every method tying every parameter leaves nothing to agree on.
  c.w = denom > 0.0 ? 12.0 * s / denom : 0.0;
  c.dof = n - 1;
  c.chiSq = md * (nd - 1.0) * c.w;
  c.pValue = boost::math::gamma_q(0.5 * static_cast<double>(c.dof), 0.5 * c.chiSq);
  return c;
}

Eigen::MatrixXd pairwise_correlation(const RankingTable& table, bool spearman) {
  const auto m = static_cast<Eigen::Index>(table.m());
  require(m >= 2, ErrorKind::InsufficientData, "correlation needs at least two methods");
  const Eigen::MatrixXd& src = spearman ? table.ranks : table.scaled;
  Eigen::MatrixXd centered = src.rowwise() - src.colwise().mean();
  const Eigen::VectorXd norms = centered.colwise().norm();
  Eigen::MatrixXd r(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      if (norms(a) == 0.0 || norms(b) == 0.0) {
        r(a, b) = std::nan("");
      } else if (a == b) {
        r(a, b) = 1.0;
      } else {
        r(a, b) = std::clamp(centered.col(a).dot(centered.col(b)) / (norms(a) * norms(b)), -1.0,
                             1.0);
      }
    }
  }
  return r;
}

RankingTable read_ranking_csv(const std::filesystem::path& path) {
  const auto csv = read_csv(path);
  require(csv.header.size() >= 2, ErrorKind::Structural,
          path.string() + ": ranking CSV needs a parameter column and one method column");
  std::vector<std::string> methods(csv.header.begin() + 1, csv.header.end());
  std::vector<std::string> params;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(csv.rows.size()),
                         static_cast<Eigen::Index>(methods.size()));
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    params.push_back(csv.rows[i][0]);
    for (std::size_t j = 0; j < methods.size(); ++j) {
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          parse_double(csv.rows[i][j + 1]);
    }
  }
  return RankingTable::from_columns(std::move(params), std::move(methods), values);
}

namespace {

void write_matrix(const std::filesystem::path& path, const RankingTable& table,
                  const Eigen::MatrixXd& values) {
  CsvTable csv;
  csv.header.push_back("param");
  csv.header.insert(csv.header.end(), table.methods.begin(), table.methods.end());
  for (std::size_t i = 0; i < table.k(); ++i) {
    std::vector<std::string> row{table.params[i]};
    for (std::size_t j = 0; j < table.m(); ++j) {
      row.push_back(format_double(values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
    csv.rows.push_back(std::move(row));
  }
  write_csv(path, csv);
}

}  // namespace

void write_ranking_csv(const std::filesystem::path& path, const RankingTable& table) {
  write_matrix(path, table, table.scaled);
}

void write_rank_csv(const std::filesystem::path& path, const RankingTable& table) {
  write_matrix(path, table, table.ranks);
}

}  // namespace sensa
