#include "eagle/survival.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "eagle/error.hpp"

namespace eagle {

namespace {

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) fail(ErrorCode::ShapeMismatch, "risks, times and events must have equal length");
}

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i, std::size_t v) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) tree_[i] += v;
  }
  // Sum over [0, i).
  std::size_t prefix(std::size_t i) const {
    std::size_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::size_t> tree_;
};

}  // namespace

double ConcordanceCounts::value() const {
  if (comparable == 0) fail(ErrorCode::NoComparablePairs, "no comparable pairs for the concordance index");
  return (2.0 * static_cast<double>(concordant) + static_cast<double>(tied_risk)) /
         (2.0 * static_cast<double>(comparable));
}

ConcordanceCounts concordance_counts(std::span<const double> risks, std::span<const double> times,
                                     std::span<const int> events) {
  check_lengths(risks.size(), times.size(), events.size());
  const std::size_t n = risks.size();
  std::vector<double> uniq(risks.begin(), risks.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  auto rank = [&](double r) { return static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), r) - uniq.begin()); };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });

  ConcordanceCounts c;
  Fenwick tree(uniq.size());
  std::size_t inserted = 0;
  for (std::size_t g = 0; g < n;) {
    std::size_t end = g;
    while (end < n && times[order[end]] == times[order[g]]) ++end;
    // The tree holds exactly the subjects with strictly later times.
    for (std::size_t p = g; p < end; ++p) {
      const std::size_t i = order[p];
      if (events[i] != 1) continue;
      const std::size_t r = rank(risks[i]);
      const std::size_t below = tree.prefix(r);
      const std::size_t equal = tree.prefix(r + 1) - below;
      c.comparable += inserted;
      c.concordant += below;
      c.tied_risk += equal;
    }
    for (std::size_t p = g; p < end; ++p) tree.add(rank(risks[order[p]]), 1);
    inserted += end - g;
    g = end;
  }
  return c;
}

double c_index(std::span<const double> risks, std::span<const double> times, std::span<const int> events) {
  return concordance_counts(risks, times, events).value();
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) fail(ErrorCode::EmptyInput, "percentile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

const char* risk_level_name(RiskLevel level) {
  switch (level) {
    case RiskLevel::Low: return "Low";
    case RiskLevel::Medium: return "Medium";
    case RiskLevel::High: return "High";
  }
  return "?";
}

const char* risk_level_slug(RiskLevel level) {
  switch (level) {
    case RiskLevel::Low: return "low";
    case RiskLevel::Medium: return "medium";
    case RiskLevel::High: return "high";
  }
  return "?";
}

Stratification tertile_stratify(std::span<const double> risks, const std::vector<std::string>& ids) {
  if (risks.size() != ids.size()) fail(ErrorCode::ShapeMismatch, "risks and ids must have equal length");
  if (risks.size() < 3) fail(ErrorCode::TooFewPatients, "tertiles need at least 3 patients, got " + std::to_string(risks.size()));
  std::vector<double> sorted(risks.begin(), risks.end());
  std::sort(sorted.begin(), sorted.end());
  Stratification s;
  s.low_cutoff = percentile_sorted(sorted, 1.0 / 3.0);
  s.high_cutoff = percentile_sorted(sorted, 2.0 / 3.0);
  for (std::size_t g = 0; g < 3; ++g) s.groups[g].level = kRiskLevels[g];

  std::vector<std::size_t> order(risks.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (risks[a] != risks[b]) return risks[a] < risks[b];
    return ids[a] < ids[b];
  });
  s.level_of.assign(risks.size(), RiskLevel::Low);
  for (std::size_t i : order) {
    RiskLevel lvl = RiskLevel::Medium;
    if (risks[i] <= s.low_cutoff)
      lvl = RiskLevel::Low;
    else if (risks[i] > s.high_cutoff)
      lvl = RiskLevel::High;
    s.level_of[i] = lvl;
    auto& grp = s.groups[static_cast<std::size_t>(lvl)];
    grp.members.push_back(i);
    grp.ids.push_back(ids[i]);
  }
  for (const auto& g : s.groups)
    if (g.members.empty())
      s.warnings.push_back(std::string("risk group ") + risk_level_name(g.level) +
                           " is empty; scores are heavily tied");
  return s;
}

double KMCurve::at(double t) const {
  double s = 1.0;
  for (std::size_t i = 0; i < time.size() && time[i] <= t; ++i) s = survival[i];
  return s;
}

KMCurve kaplan_meier(std::span<const double> times, std::span<const int> events) {
  if (times.size() != events.size()) fail(ErrorCode::ShapeMismatch, "times and events must have equal length");
  if (times.empty()) fail(ErrorCode::EmptyInput, "Kaplan-Meier of an empty sample");
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  KMCurve km;
  std::size_t at_risk = times.size();
  double s = 1.0;
  for (std::size_t g = 0; g < order.size();) {
    std::size_t end = g, d = 0;
    while (end < order.size() && times[order[end]] == times[order[g]]) {
      d += events[order[end]] == 1;
      ++end;
    }
    if (d > 0) {
      s *= static_cast<double>(at_risk - d) / static_cast<double>(at_risk);
      km.time.push_back(times[order[g]]);
      km.survival.push_back(s);
      km.at_risk.push_back(at_risk);
      km.events.push_back(d);
    }
    at_risk -= end - g;
    g = end;
  }
  return km;
}

std::optional<double> median_survival(const KMCurve& curve) {
  for (std::size_t i = 0; i < curve.time.size(); ++i)
    if (curve.survival[i] <= 0.5) return curve.time[i];
  return std::nullopt;
}

namespace {

// Solves A x = b in place by Gaussian elimination with partial pivoting.
bool solve(std::vector<std::vector<double>> a, std::vector<double> b, std::vector<double>& x) {
  const std::size_t n = b.size();
  double scale = 0.0;
  for (const auto& row : a)
    for (double v : row) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return false;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) <= 1e-13 * scale) return false;
    std::swap(a[piv], a[c]);
    std::swap(b[piv], b[c]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return true;
}

}  // namespace

LogRankResult log_rank(const std::vector<SurvivalGroup>& input) {
  std::vector<const SurvivalGroup*> groups;
  for (const auto& g : input) {
    if (g.times.size() != g.events.size()) fail(ErrorCode::ShapeMismatch, "group times and events differ in length");
    if (!g.times.empty()) groups.push_back(&g);
  }
  if (groups.size() < 2) fail(ErrorCode::DegenerateGroups, "log-rank needs at least two nonempty groups");
  const std::size_t k = groups.size();

  struct Obs {
    double time;
    int event;
    std::size_t group;
  };
  std::vector<Obs> all;
  for (std::size_t g = 0; g < k; ++g)
    for (std::size_t i = 0; i < groups[g]->times.size(); ++i)
      all.push_back({groups[g]->times[i], groups[g]->events[i], g});
  std::sort(all.begin(), all.end(), [](const Obs& a, const Obs& b) { return a.time < b.time; });

  std::vector<double> at_risk(k, 0.0);
  for (const auto& o : all) at_risk[o.group] += 1.0;
  LogRankResult res;
  res.observed.assign(k, 0.0);
  res.expected.assign(k, 0.0);
  std::vector<std::vector<double>> var(k, std::vector<double>(k, 0.0));
  std::size_t total_events = 0;

  for (std::size_t s = 0; s < all.size();) {
    std::size_t e = s;
    std::vector<double> d(k, 0.0), leaving(k, 0.0);
    while (e < all.size() && all[e].time == all[s].time) {
      d[all[e].group] += all[e].event == 1;
      leaving[all[e].group] += 1.0;
      ++e;
    }
    const double dt = std::accumulate(d.begin(), d.end(), 0.0);
    const double nt = std::accumulate(at_risk.begin(), at_risk.end(), 0.0);
    if (dt > 0) {
      total_events += static_cast<std::size_t>(dt);
      for (std::size_t g = 0; g < k; ++g) {
        res.observed[g] += d[g];
        res.expected[g] += at_risk[g] * dt / nt;
      }
      if (nt > 1.0) {
        const double f = dt * (nt - dt) / (nt - 1.0);
        for (std::size_t g = 0; g < k; ++g)
          for (std::size_t h = 0; h < k; ++h)
            var[g][h] += f * (at_risk[g] / nt) * ((g == h ? 1.0 : 0.0) - at_risk[h] / nt);
      }
    }
    for (std::size_t g = 0; g < k; ++g) at_risk[g] -= leaving[g];
    s = e;
  }
  if (total_events == 0) fail(ErrorCode::DegenerateGroups, "log-rank needs at least one event");

  const std::size_t m = k - 1;
  std::vector<std::vector<double>> a(m, std::vector<double>(m));
  std::vector<double> u(m), x;
  for (std::size_t g = 0; g < m; ++g) {
    u[g] = res.observed[g] - res.expected[g];
    for (std::size_t h = 0; h < m; ++h) a[g][h] = var[g][h];
  }
  if (!solve(a, u, x)) fail(ErrorCode::DegenerateGroups, "log-rank variance matrix is singular");
  double stat = 0.0;
  for (std::size_t g = 0; g < m; ++g) stat += u[g] * x[g];
  res.statistic = std::max(stat, 0.0);
  res.df = m;
  res.p_value = chi_square_sf(res.statistic, m);
  return res;
}

namespace {

double simpson(const std::function<double(double)>& f, double a, double fa, double b, double fb, double m, double fm,
               double whole, double eps, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
  return simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1) +
         simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double eps) {
  // Seed on a fixed grid so narrow peaks are not missed by the first split.
  constexpr int kPanels = 16;
  double total = 0.0;
  const double h = (b - a) / kPanels;
  for (int i = 0; i < kPanels; ++i) {
    const double lo = a + h * i, hi = lo + h, mid = 0.5 * (lo + hi);
    const double flo = f(lo), fhi = f(hi), fmid = f(mid);
    const double whole = h / 6.0 * (flo + 4.0 * fmid + fhi);
    total += simpson(f, lo, flo, hi, fhi, mid, fmid, whole, eps / kPanels, 48);
  }
  return total;
}

}  // namespace

double chi_square_sf(double x, std::size_t df) {
  if (df == 0) fail(ErrorCode::InvalidConfig, "chi-square needs df >= 1");
  if (!(x > 0.0)) return 1.0;
  const double k = static_cast<double>(df);
  const double log_norm = -(0.5 * k * std::log(2.0) + std::lgamma(0.5 * k));
  // Substitute t = u^2 (removes the df = 1 singularity at 0), then map
  // u in [sqrt(x), inf) onto s in [0, 1) with u = sqrt(x) + s / (1 - s).
  const double root = std::sqrt(x);
  auto integrand = [&](double s) {
    if (s >= 1.0) return 0.0;
    const double u = root + s / (1.0 - s);
    const double du = 1.0 / ((1.0 - s) * (1.0 - s));
    const double log_g = std::log(2.0) + (k - 1.0) * std::log(u) - 0.5 * u * u + log_norm;
    return std::exp(log_g) * du;
  };
  // Absolute tolerance 1e-10, tightened relative to the tail mass so
  // small p-values keep their leading digits.
  const double rough = adaptive_simpson(integrand, 0.0, 1.0, 1e-6);
  const double eps = std::min(1e-10, std::max(rough, 1e-300) * 1e-8);
  const double p = adaptive_simpson(integrand, 0.0, 1.0, eps);
  return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

}  // namespace eagle
