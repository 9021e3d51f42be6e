#include "eagle/report.hpp"

#include <algorithm>
#include <cstdio>

#include "eagle/csv.hpp"
#include "eagle/error.hpp"
#include "json.hpp"

namespace eagle {

SurvivalReport survival_report(std::vector<std::string> ids, std::vector<double> risks, std::vector<double> times,
                               std::vector<int> events) {
  SurvivalReport rep;
  rep.cindex = c_index(risks, times, events);
  rep.strata = tertile_stratify(risks, ids);
  std::vector<SurvivalGroup> groups(3);
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t i : rep.strata.groups[g].members) {
      groups[g].times.push_back(times[i]);
      groups[g].events.push_back(events[i]);
    }
    if (!groups[g].times.empty()) {
      rep.curves[g] = kaplan_meier(groups[g].times, groups[g].events);
      rep.median_survival[g] = median_survival(rep.curves[g]);
    }
  }
  std::size_t populated = 0;
  for (const auto& g : groups) populated += !g.times.empty();
  if (populated >= 2) rep.logrank = log_rank(groups);
  rep.ids = std::move(ids);
  rep.risks = std::move(risks);
  rep.times = std::move(times);
  rep.events = std::move(events);
  return rep;
}

std::string km_curve_csv(const KMCurve& curve) {
  std::string out = "time,survival,n_at_risk,n_events\n";
  for (std::size_t i = 0; i < curve.time.size(); ++i)
    out += csv::format_double(curve.time[i]) + "," + csv::format_double(curve.survival[i]) + "," +
           std::to_string(curve.at_risk[i]) + "," + std::to_string(curve.events[i]) + "\n";
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string km_svg(const std::array<KMCurve, 3>& curves) {
  constexpr double kWidth = 640, kHeight = 420, kLeft = 60, kRight = 20, kTop = 20, kBottom = 50;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  double tmax = 0.0;
  for (const auto& c : curves)
    if (!c.time.empty()) tmax = std::max(tmax, c.time.back());
  if (tmax <= 0.0) tmax = 1.0;
  auto x = [&](double t) { return kLeft + pw * t / tmax; };
  auto y = [&](double s) { return kTop + ph * (1.0 - s); };
  const char* colours[3] = {"#1b9e77", "#d95f02", "#7570b3"};

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
       "\" viewBox=\"0 0 " + fmt(kWidth) + " " + fmt(kHeight) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) + "\" fill=\"white\"/>\n";
  s += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(y(0)) + "\" x2=\"" + fmt(kLeft + pw) + "\" y2=\"" + fmt(y(0)) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(y(0)) + "\" x2=\"" + fmt(kLeft) + "\" y2=\"" + fmt(y(1)) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double sv = i / 4.0, tv = tmax * i / 4.0;
    s += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(y(sv) + 4) + "\" font-size=\"11\" text-anchor=\"end\">" +
         fmt(sv) + "</text>\n";
    s += "<text x=\"" + fmt(x(tv)) + "\" y=\"" + fmt(y(0) + 16) + "\" font-size=\"11\" text-anchor=\"middle\">" +
         fmt(tv) + "</text>\n";
  }
  s += "<text x=\"" + fmt(kLeft + pw / 2) + "\" y=\"" + fmt(kHeight - 10) +
       "\" font-size=\"12\" text-anchor=\"middle\">Time (days)</text>\n";
  s += "<text x=\"16\" y=\"" + fmt(kTop + ph / 2) + "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fmt(kTop + ph / 2) + ")\">Survival probability</text>\n";
  for (std::size_t g = 0; g < 3; ++g) {
    const auto& c = curves[g];
    std::string path = "M" + fmt(x(0)) + "," + fmt(y(1));
    double prev = 1.0;
    for (std::size_t i = 0; i < c.time.size(); ++i) {
      path += " L" + fmt(x(c.time[i])) + "," + fmt(y(prev));
      path += " L" + fmt(x(c.time[i])) + "," + fmt(y(c.survival[i]));
      prev = c.survival[i];
    }
    path += " L" + fmt(x(tmax)) + "," + fmt(y(prev));
    s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + colours[g] + "\" stroke-width=\"2\"/>\n";
    const double ly = kTop + 14 + 16.0 * static_cast<double>(g);
    s += "<text x=\"" + fmt(kLeft + pw - 80) + "\" y=\"" + fmt(ly) + "\" font-size=\"12\" fill=\"" + colours[g] + "\">" +
         risk_level_name(kRiskLevels[g]) + " risk</text>\n";
  }
  s += "</svg>\n";
  return s;
}

void write_survival_report(const SurvivalReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string groups = "id,risk,group\n";
  for (std::size_t i = 0; i < rep.ids.size(); ++i)
    groups += rep.ids[i] + "," + csv::format_double(rep.risks[i]) + "," +
              risk_level_name(rep.strata.level_of[i]) + "\n";
  csv::write_text(dir / "risk_groups.csv", groups);

  nlohmann::json j;
  j["cindex"] = rep.cindex;
  j["low_cutoff"] = rep.strata.low_cutoff;
  j["high_cutoff"] = rep.strata.high_cutoff;
  j["warnings"] = rep.strata.warnings;
  j["groups"] = nlohmann::json::array();
  for (std::size_t g = 0; g < 3; ++g) {
    const char* slug = risk_level_slug(kRiskLevels[g]);
    csv::write_text(dir / (std::string("km_") + slug + ".csv"), km_curve_csv(rep.curves[g]));
    nlohmann::json gj;
    gj["label"] = risk_level_name(kRiskLevels[g]);
    gj["size"] = rep.strata.groups[g].members.size();
    std::size_t events = 0;
    for (std::size_t i : rep.strata.groups[g].members) events += rep.events[i] == 1;
    gj["events"] = events;
    gj["median_survival"] = rep.median_survival[g] ? nlohmann::json(*rep.median_survival[g]) : nlohmann::json();
    j["groups"].push_back(gj);
  }
  if (rep.logrank) {
    j["logrank"] = {{"statistic", rep.logrank->statistic},
                    {"df", rep.logrank->df},
                    {"p_value", rep.logrank->p_value},
                    {"observed", rep.logrank->observed},
                    {"expected", rep.logrank->expected}};
  } else {
    j["logrank"] = nullptr;
  }
  csv::write_text(dir / "survival.json", j.dump(2) + "\n");
  csv::write_text(dir / "km.svg", km_svg(rep.curves));
}

}  // namespace eagle
