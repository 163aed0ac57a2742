#pragma once

// Least squares for panels and short series.
//
// Fixed effects are absorbed by alternating demeaning (unit, then time) until
// a sweep moves no entry by more than 1e-10 relative to the column scale.
// OLS on the demeaned design uses a rank-revealing QR, so collinear or
// constant-within regressors are reported by name instead of producing
// garbage.
//
// Covariances:
//   classical       s^2 (X'X)^-1 with s^2 = e'e / (N - K)
//   hc_robust       HC0, no small-sample factor
//   cluster_robust  CR0 scaled by G/(G-1) * (N-1)/(N-K)
//   newey_west      Bartlett kernel, w_l = 1 - l/(L+1), no factor
// K counts regressors plus absorbed fixed effects; for cluster_robust a fixed
// effect nested within the clusters is not counted, since its dummies are
// already spanned by the cluster sums. With L = 0 Newey-West is HC0 exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "csv.hpp"

namespace meritmatch::econ {

class EstimationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Named numeric columns of equal length. NaN marks a missing cell.
class Table {
 public:
  Table& add(std::string name, std::vector<double> values) {
    if (!names_.empty() && values.size() != rows())
      throw EstimationError("table: column '" + name + "' has " + std::to_string(values.size()) + " rows, expected " +
                            std::to_string(rows()));
    if (has(name)) throw EstimationError("table: duplicate column '" + name + "'");
    names_.push_back(std::move(name));
    cols_.push_back(std::move(values));
    return *this;
  }

  [[nodiscard]] bool has(const std::string& name) const { return std::find(names_.begin(), names_.end(), name) != names_.end(); }

  [[nodiscard]] const std::vector<double>& col(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw EstimationError("table: missing column '" + name + "'");
    return cols_[static_cast<std::size_t>(it - names_.begin())];
  }

  [[nodiscard]] std::size_t rows() const { return cols_.empty() ? 0 : cols_.front().size(); }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }

  /// Picks numeric columns out of a parsed CSV; "NA" becomes NaN.
  static Table from_csv(const csv::Document& doc, const std::vector<std::string>& columns) {
    Table t;
    for (const auto& name : columns) {
      const std::size_t c = doc.column(name);
      std::vector<double> v(doc.size());
      for (std::size_t r = 0; r < doc.size(); ++r) v[r] = csv::to_double(doc.row(r)[c]);
      t.add(name, std::move(v));
    }
    return t;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> cols_;
};

enum class Covariance { classical, hc_robust, cluster_robust, newey_west };

/// Reference distribution for cluster-robust p-values.
enum class ClusterDf { t_g_minus_1, normal };

struct RegressionSpec {
  std::string outcome;
  std::vector<std::string> regressors;
  std::vector<std::string> fixed_effects;  // at most two: unit, then time
  std::string cluster;                     // empty: none
  Covariance covariance = Covariance::classical;
  int nw_lag = 0;
  bool intercept = true;  // ignored when fixed effects are absorbed
  ClusterDf cluster_df = ClusterDf::t_g_minus_1;
};

inline void validate(const RegressionSpec& spec) {
  if (spec.outcome.empty()) throw EstimationError("spec: outcome column required");
  if (spec.regressors.empty() && (!spec.fixed_effects.empty() || !spec.intercept))
    throw EstimationError("spec: no regressors to estimate");
  if (spec.fixed_effects.size() > 2) throw EstimationError("spec: at most two fixed-effect dimensions");
  if (spec.fixed_effects.size() == 2 && spec.fixed_effects[0] == spec.fixed_effects[1])
    throw EstimationError("spec: fixed-effect dimensions must differ");
  if (spec.covariance == Covariance::cluster_robust && spec.cluster.empty())
    throw EstimationError("spec: cluster-robust covariance needs a cluster column");
  if (spec.covariance == Covariance::newey_west && spec.nw_lag < 0) throw EstimationError("spec: Newey-West lag must be >= 0");
}

struct RegressionResult {
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;
  std::vector<double> se, t, p;
  std::optional<std::vector<double>> bootstrap_p;  // reserved for a wild cluster bootstrap
  int n_obs = 0;
  int n_clusters = 0;
  std::vector<int> absorbed_levels;  // levels per fixed-effect dimension
  int absorbed_df = 0;               // degrees of freedom used by the fixed effects
  int df_resid = 0;                  // N - K
  int sweeps = 0;                    // demeaning sweeps
  double r2_within = std::numeric_limits<double>::quiet_NaN();

  [[nodiscard]] std::size_t index(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw EstimationError("result: no coefficient '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  }
  [[nodiscard]] double coef(const std::string& name) const { return beta[static_cast<Eigen::Index>(index(name))]; }
  [[nodiscard]] double se_of(const std::string& name) const { return se[index(name)]; }
};

// Well under the 1e-10 convergence target: per-sweep change understates the
// remaining distance when the projections contract slowly.
inline constexpr double kDemeanTol = 1e-13;
inline constexpr int kMaxSweeps = 10000;

namespace detail {

struct Levels {
  std::vector<int> code;  // per used row
  int count = 0;
};

inline Levels encode(const std::vector<double>& column, const std::vector<std::size_t>& rows) {
  std::map<double, int> ids;
  Levels out;
  out.code.reserve(rows.size());
  for (const std::size_t r : rows) {
    const auto [it, fresh] = ids.try_emplace(column[r], static_cast<int>(ids.size()));
    out.code.push_back(it->second);
  }
  out.count = static_cast<int>(ids.size());
  return out;
}

inline void demean_once(Eigen::MatrixXd& m, const Levels& g) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(g.count, m.cols());
  Eigen::VectorXd n = Eigen::VectorXd::Zero(g.count);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    sums.row(g.code[static_cast<std::size_t>(i)]) += m.row(i);
    n[g.code[static_cast<std::size_t>(i)]] += 1.0;
  }
  for (Eigen::Index k = 0; k < g.count; ++k) sums.row(k) /= n[k];
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) -= sums.row(g.code[static_cast<std::size_t>(i)]);
}

/// Alternating projections; returns the number of sweeps used.
inline int demean(Eigen::MatrixXd& m, const std::vector<Levels>& fes) {
  if (fes.empty()) return 0;
  if (fes.size() == 1) {
    demean_once(m, fes[0]);
    return 1;
  }
  Eigen::VectorXd scale = m.cwiseAbs().colwise().maxCoeff().transpose().cwiseMax(1.0);
  for (int sweep = 1; sweep <= kMaxSweeps; ++sweep) {
    const Eigen::MatrixXd before = m;
    for (const auto& g : fes) demean_once(m, g);
    double change = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      change = std::max(change, (m.col(c) - before.col(c)).cwiseAbs().maxCoeff() / scale[c]);
    if (change < kDemeanTol) return sweep;
  }
  throw EstimationError("fe_ols: demeaning did not converge in " + std::to_string(kMaxSweeps) + " sweeps");
}

/// Connected components of the bipartite graph linking unit and time levels.
inline int components(const Levels& a, const Levels& b) {
  std::vector<int> parent(static_cast<std::size_t>(a.count + b.count));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  for (std::size_t i = 0; i < a.code.size(); ++i) {
    const int x = find(a.code[i]), y = find(a.count + b.code[i]);
    if (x != y) parent[static_cast<std::size_t>(x)] = y;
  }
  int n = 0;
  for (int i = 0; i < a.count + b.count; ++i) n += find(i) == i;
  return n;
}

/// True when every level of `fe` sits inside a single cluster.
inline bool nested(const Levels& fe, const Levels& cluster) {
  std::vector<int> owner(static_cast<std::size_t>(fe.count), -1);
  for (std::size_t i = 0; i < fe.code.size(); ++i) {
    int& o = owner[static_cast<std::size_t>(fe.code[i])];
    if (o == -1) o = cluster.code[i];
    else if (o != cluster.code[i]) return false;
  }
  return true;
}

inline double two_sided_p(double t, double df, bool normal) {
  if (!std::isfinite(t)) return std::numeric_limits<double>::quiet_NaN();
  if (normal) return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>{}, std::abs(t)));
  if (!(df > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>{df}, std::abs(t)));
}

}  // namespace detail

/// OLS with up to two absorbed fixed effects. Rows with a missing value in
/// any used column are dropped.
inline RegressionResult fe_ols(const Table& table, const RegressionSpec& spec) {
  validate(spec);
  const auto& yc = table.col(spec.outcome);
  std::vector<const std::vector<double>*> xc, fc;
  for (const auto& r : spec.regressors) xc.push_back(&table.col(r));
  for (const auto& f : spec.fixed_effects) fc.push_back(&table.col(f));
  const std::vector<double>* cc = spec.cluster.empty() ? nullptr : &table.col(spec.cluster);

  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    bool ok = std::isfinite(yc[r]);
    for (const auto* c : xc) ok = ok && std::isfinite((*c)[r]);
    for (const auto* c : fc) ok = ok && std::isfinite((*c)[r]);
    if (cc) ok = ok && std::isfinite((*cc)[r]);
    if (ok) rows.push_back(r);
  }
  const auto N = static_cast<Eigen::Index>(rows.size());

  RegressionResult res;
  const bool add_intercept = spec.fixed_effects.empty() && spec.intercept;
  if (add_intercept) res.names.push_back("intercept");
  res.names.insert(res.names.end(), spec.regressors.begin(), spec.regressors.end());
  const auto K = static_cast<Eigen::Index>(res.names.size());
  if (N <= K) throw EstimationError("fe_ols: " + std::to_string(N) + " usable rows for " + std::to_string(K) + " coefficients");

  // Column 0 is the outcome; the rest are regressors in spec order.
  Eigen::MatrixXd m(N, static_cast<Eigen::Index>(xc.size()) + 1);
  for (Eigen::Index i = 0; i < N; ++i) {
    const std::size_t r = rows[static_cast<std::size_t>(i)];
    m(i, 0) = yc[r];
    for (std::size_t j = 0; j < xc.size(); ++j) m(i, static_cast<Eigen::Index>(j) + 1) = (*xc[j])[r];
  }
  const Eigen::MatrixXd raw = m;

  std::vector<detail::Levels> fes;
  for (const auto* c : fc) fes.push_back(detail::encode(*c, rows));
  res.sweeps = detail::demean(m, fes);
  for (const auto& g : fes) res.absorbed_levels.push_back(g.count);
  int comps = 0;
  if (fes.size() == 1) res.absorbed_df = fes[0].count;
  if (fes.size() == 2) {
    comps = detail::components(fes[0], fes[1]);
    res.absorbed_df = fes[0].count + fes[1].count - comps;
  }

  for (std::size_t j = 0; j < xc.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j) + 1;
    const double spread = (raw.col(c).array() - raw.col(c).mean()).matrix().norm();
    if (m.col(c).norm() <= 1e-9 * std::max(1.0, raw.col(c).norm()) || spread == 0.0)
      throw EstimationError("fe_ols: regressor '" + spec.regressors[j] + "' has no within variation");
  }

  Eigen::MatrixXd X(N, K);
  if (add_intercept) X.col(0).setOnes();
  X.rightCols(static_cast<Eigen::Index>(xc.size())) = m.rightCols(static_cast<Eigen::Index>(xc.size()));
  const Eigen::VectorXd y = m.col(0);

  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < K) {
      for (Eigen::Index j = 1; j <= K; ++j) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> sub(X.leftCols(j));
        sub.setThreshold(1e-10);
        if (sub.rank() < j) throw EstimationError("fe_ols: regressor '" + res.names[static_cast<std::size_t>(j - 1)] + "' is collinear");
      }
    }
  }

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(K).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(K, K));
  const Eigen::MatrixXd bread = Rinv * Rinv.transpose();
  res.beta = qr.solve(y);
  const Eigen::VectorXd e = y - X * res.beta;

  res.n_obs = static_cast<int>(N);
  res.df_resid = static_cast<int>(N - K) - res.absorbed_df;
  const double ssr = e.squaredNorm();
  const double tss = add_intercept ? (y.array() - y.mean()).matrix().squaredNorm() : y.squaredNorm();
  res.r2_within = tss > 0.0 ? 1.0 - ssr / tss : std::numeric_limits<double>::quiet_NaN();

  double p_df = res.df_resid;
  bool p_normal = false;
  switch (spec.covariance) {
    case Covariance::classical:
      if (res.df_resid <= 0) throw EstimationError("fe_ols: no residual degrees of freedom");
      res.vcov = bread * (ssr / res.df_resid);
      break;
    case Covariance::hc_robust: {
      const Eigen::MatrixXd U = X.array().colwise() * e.array();
      res.vcov = bread * (U.transpose() * U) * bread;
      break;
    }
    case Covariance::cluster_robust: {
      const auto g = detail::encode(*cc, rows);
      res.n_clusters = g.count;
      if (g.count < 2) throw EstimationError("fe_ols: cluster-robust covariance needs at least two clusters");
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(g.count, K);
      for (Eigen::Index i = 0; i < N; ++i) S.row(g.code[static_cast<std::size_t>(i)]) += X.row(i) * e[i];
      int fe_df = 0;
      if (fes.size() == 1) fe_df = detail::nested(fes[0], g) ? 0 : fes[0].count;
      if (fes.size() == 2) {
        for (const auto& f : fes)
          if (!detail::nested(f, g)) fe_df += f.count;
        fe_df = std::max(0, fe_df - comps);
      }
      const double k_total = static_cast<double>(K + fe_df);
      const double G = g.count, n = static_cast<double>(N);
      if (n - k_total <= 0) throw EstimationError("fe_ols: no residual degrees of freedom");
      const double factor = G / (G - 1.0) * (n - 1.0) / (n - k_total);
      res.vcov = factor * bread * (S.transpose() * S) * bread;
      p_df = G - 1.0;
      p_normal = spec.cluster_df == ClusterDf::normal;
      break;
    }
    case Covariance::newey_west: {
      if (spec.nw_lag >= N) throw EstimationError("newey_west: lag " + std::to_string(spec.nw_lag) + " must be below T=" + std::to_string(N));
      const Eigen::MatrixXd U = X.array().colwise() * e.array();
      Eigen::MatrixXd S = U.transpose() * U;
      for (int l = 1; l <= spec.nw_lag; ++l) {
        const double w = 1.0 - static_cast<double>(l) / (spec.nw_lag + 1.0);
        const Eigen::MatrixXd G = U.bottomRows(N - l).transpose() * U.topRows(N - l);
        S += w * (G + G.transpose());
      }
      res.vcov = bread * S * bread;
      break;
    }
  }
  res.vcov = 0.5 * (res.vcov + res.vcov.transpose());

  for (Eigen::Index j = 0; j < K; ++j) {
    const double se = std::sqrt(std::max(0.0, res.vcov(j, j)));
    const double t = se > 0.0 ? res.beta[j] / se : std::numeric_limits<double>::quiet_NaN();
    res.se.push_back(se);
    res.t.push_back(t);
    res.p.push_back(detail::two_sided_p(t, p_df, p_normal));
  }
  return res;
}

/// OLS on a time-ordered series with Newey-West covariance. If `time` names
/// a column it must be strictly increasing.
inline RegressionResult newey_west_ols(const Table& series, RegressionSpec spec, const std::string& time = {}) {
  spec.covariance = Covariance::newey_west;
  if (!time.empty()) {
    const auto& t = series.col(time);
    for (std::size_t i = 1; i < t.size(); ++i)
      if (!(t[i] > t[i - 1])) throw EstimationError("newey_west: rows are not ordered by '" + time + "'");
  }
  if (static_cast<std::size_t>(std::max(spec.nw_lag, 0)) >= series.rows())
    throw EstimationError("newey_west: lag " + std::to_string(spec.nw_lag) + " must be below T=" + std::to_string(series.rows()));
  return fe_ols(series, spec);
}

struct EventCoefficient {
  double period = 0.0;
  double beta = 0.0;
  double se = 0.0;
  double p = 0.0;
};

inline std::string event_term(const std::string& flag, double period) { return flag + "_x_" + csv::format(period); }

/// Treated-flag x period coefficients relative to `base`, with unit and
/// period fixed effects and unit-clustered errors.
inline std::vector<EventCoefficient> event_study(const Table& panel, const std::string& outcome, const std::string& flag,
                                                 const std::string& time, double base, const std::string& unit = "prefecture") {
  const auto& t = panel.col(time);
  const auto& d = panel.col(flag);
  std::vector<double> periods;
  for (const double v : t)
    if (std::isfinite(v)) periods.push_back(v);
  std::sort(periods.begin(), periods.end());
  periods.erase(std::unique(periods.begin(), periods.end()), periods.end());
  if (!std::binary_search(periods.begin(), periods.end(), base))
    throw EstimationError("event_study: base period " + csv::format(base) + " not in the panel");

  Table work = panel;
  RegressionSpec spec{outcome, {}, {unit, time}, unit, Covariance::cluster_robust};
  std::vector<double> used;
  for (const double period : periods) {
    if (period == base) continue;
    std::vector<double> x(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) x[i] = t[i] == period ? d[i] : 0.0;
    const std::string name = event_term(flag, period);
    work.add(name, std::move(x));
    spec.regressors.push_back(name);
    used.push_back(period);
  }
  const auto res = fe_ols(work, spec);
  std::vector<EventCoefficient> out;
  for (std::size_t j = 0; j < used.size(); ++j) {
    const auto k = res.index(spec.regressors[j]);
    out.push_back({used[j], res.beta[static_cast<Eigen::Index>(k)], res.se[k], res.p[k]});
  }
  return out;
}

inline constexpr const char* kDidTerm = "centralized_x_tokyo_area";

/// Centralized x Tokyo-area interaction with prefecture and year effects,
/// clustered by prefecture.
inline RegressionResult did_centralization(const Table& panel, const std::string& outcome = "y") {
  const auto& c = panel.col("centralized");
  const auto& a = panel.col("tokyo_area");
  std::vector<double> x(c.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = c[i] * a[i];
  Table work = panel;
  work.add(kDidTerm, std::move(x));
  return fe_ols(work, {outcome, {kDidTerm}, {"prefecture", "year"}, "prefecture", Covariance::cluster_robust});
}

}  // namespace meritmatch::econ
