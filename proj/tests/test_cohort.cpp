#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "eagle/cohort.hpp"
#include "eagle/error.hpp"
#include "eagle/survival.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace eagle;
using testing::TempDir;

namespace {

const char* kManifest = R"({
  "name": "tiny",
  "clinical": {"numeric": ["age", "size"], "categorical": ["sex"], "file": "clinical.csv"},
  "modalities": [
    {"name": "imaging", "dim": 4, "files": ["img.csv"]},
    {"name": "text", "dim": 3, "files": ["txt_a.csv", "txt_b.csv"]}
  ],
  "outcomes": {"file": "outcomes.csv"}
})";

void write_tiny(const TempDir& d) {
  d.write("manifest.json", kManifest);
  d.write("outcomes.csv", "id,time,event\na,10,1\nb,20,0\nc,5,1\n");
  d.write("img.csv", "id,i0,i1,i2,i3\nc,9,10,11,12\na,1,2,3,4\nb,5,6,7,8\n");
  d.write("txt_a.csv", "id,t0,t1\na,0.1,0.2\nb,0.3,0.4\nc,0.5,0.6\n");
  d.write("txt_b.csv", "id,t2\na,1\nb,2\nc,3\n");
  d.write("clinical.csv", "id,sex,age,size\na,F,60,\nb,,70,2.5\nc,M,80,3.5\n");
}

PatientRecord rec(std::string id, double t, int e, std::vector<std::optional<double>> num,
                  std::vector<std::optional<std::string>> cat = {}) {
  PatientRecord r;
  r.id = std::move(id);
  r.time = t;
  r.event = e;
  r.imaging = {0.0};
  r.text = {0.0};
  r.clinical_numeric = std::move(num);
  r.clinical_categorical = std::move(cat);
  return r;
}

}  // namespace

TEST_CASE("load_cohort joins files by id in outcome order") {
  TempDir d("cohort");
  write_tiny(d);
  const Cohort c = load_cohort(d / "manifest.json");
  REQUIRE(c.records.size() == 3);
  CHECK(c.event_count() == 2);
  CHECK(c.records[0].id == "a");
  CHECK(c.records[0].imaging == std::vector<double>{1, 2, 3, 4});
  CHECK(c.records[2].imaging == std::vector<double>{9, 10, 11, 12});
  CHECK(c.records[1].text == std::vector<double>{0.3, 0.4, 2});
  CHECK(c.records[0].clinical_numeric[0] == 60.0);
  CHECK_FALSE(c.records[0].clinical_numeric[1].has_value());
  CHECK_FALSE(c.records[1].clinical_categorical[0].has_value());
  CHECK(c.records[2].clinical_categorical[0] == std::string("M"));
  CHECK(c.manifest.dim(Modality::Text) == 3);
}

TEST_CASE("load_cohort errors") {
  TempDir d("cohort_err");
  write_tiny(d);
  SUBCASE("short embedding file") {
    d.write("img.csv", "id,i0,i1,i2,i3\na,1,2,3,4\nb,5,6,7,8\n");
    CHECK_THROWS_WITH_AS(load_cohort(d / "manifest.json"), doctest::Contains("DimensionMismatch"), Error);
  }
  SUBCASE("declared width disagrees") {
    d.write("txt_b.csv", "id,t2,t3\na,1,1\nb,2,2\nc,3,3\n");
    CHECK_THROWS_WITH_AS(load_cohort(d / "manifest.json"), doctest::Contains("DimensionMismatch"), Error);
  }
  SUBCASE("no events") {
    d.write("outcomes.csv", "id,time,event\na,10,0\nb,20,0\nc,5,0\n");
    CHECK_THROWS_WITH_AS(load_cohort(d / "manifest.json"), doctest::Contains("NoEvents"), Error);
  }
  SUBCASE("duplicate id") {
    d.write("outcomes.csv", "id,time,event\na,10,1\na,20,0\nc,5,1\n");
    CHECK_THROWS_AS(load_cohort(d / "manifest.json"), Error);
  }
  SUBCASE("missing file") {
    std::filesystem::remove(d / "txt_a.csv");
    CHECK_THROWS_WITH_AS(load_cohort(d / "manifest.json"), doctest::Contains("MissingFile"), Error);
  }
  SUBCASE("missing clinical column") {
    d.write("clinical.csv", "id,sex,age\na,F,60\nb,,70\nc,M,80\n");
    CHECK_THROWS_WITH_AS(load_cohort(d / "manifest.json"), doctest::Contains("size"), Error);
  }
  SUBCASE("garbage number") {
    d.write("txt_b.csv", "id,t2\na,1\nb,two\nc,3\n");
    CHECK_THROWS_WITH_AS(load_cohort(d / "manifest.json"), doctest::Contains("ParseError"), Error);
  }
}

TEST_CASE("write_cohort round trip") {
  SynthConfig cfg;
  cfg.n = 40;
  cfg.seed = 3;
  const Cohort c = synth_cohort(cfg).cohort;
  TempDir d("roundtrip");
  write_cohort(c, d.path());
  const Cohort back = load_cohort(d / "manifest.json");
  REQUIRE(back.records.size() == c.records.size());
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    CHECK(back.records[i].id == c.records[i].id);
    CHECK(back.records[i].time == c.records[i].time);
    CHECK(back.records[i].imaging == c.records[i].imaging);
    CHECK(back.records[i].text == c.records[i].text);
    CHECK(back.records[i].clinical_numeric == c.records[i].clinical_numeric);
    CHECK(back.records[i].clinical_categorical == c.records[i].clinical_categorical);
  }
}

TEST_CASE("preprocessing") {
  SUBCASE("median imputation then z-score") {
    const std::vector<PatientRecord> train{rec("a", 1, 1, {1.0}), rec("b", 2, 0, {std::nullopt}), rec("c", 3, 1, {3.0})};
    const auto stats = fit_preprocess(train, {"x"}, {});
    REQUIRE(stats.numeric.size() == 1);
    CHECK(stats.numeric[0].median == 2.0);
    const auto out = apply_preprocess(train, stats);
    double sum = 0;
    for (const auto& r : out) sum += r.feature(Modality::Clinical)[0];
    CHECK(std::abs(sum) < 1e-15);
    CHECK(out[0].feature(Modality::Clinical)[0] == doctest::Approx(-1.0));
    CHECK(out[1].feature(Modality::Clinical)[0] == 0.0);
  }
  SUBCASE("missing value maps to (median - mean) / std") {
    const std::vector<PatientRecord> train{rec("a", 1, 1, {1.0}), rec("b", 2, 0, {2.0}), rec("c", 3, 1, {6.0}),
                                           rec("d", 4, 1, {std::nullopt})};
    const auto stats = fit_preprocess(train, {"x"}, {});
    const double mean = 3.0, sd = std::sqrt(((4.0 + 1.0 + 9.0) / 3.0));
    const auto out = apply_preprocess({train[3], rec("e", 1, 1, {3.0})}, stats);
    CHECK(out[0].feature(Modality::Clinical)[0] == doctest::Approx((2.0 - mean) / sd).epsilon(1e-14));
    CHECK(out[1].feature(Modality::Clinical)[0] == 0.0);
  }
  SUBCASE("constant feature is dropped") {
    const std::vector<PatientRecord> train{rec("a", 1, 1, {5.0, 1.0}), rec("b", 2, 0, {5.0, 2.0}),
                                           rec("c", 3, 1, {5.0, 4.0})};
    const auto stats = fit_preprocess(train, {"const", "x"}, {});
    CHECK(stats.dropped == std::vector<std::string>{"const"});
    CHECK(stats.clinical_width() == 1);
  }
  SUBCASE("categorical one-hot with Unknown slot") {
    const std::vector<PatientRecord> train{rec("a", 1, 1, {1.0}, {"x"}), rec("b", 2, 0, {2.0}, {"y"}),
                                           rec("c", 3, 1, {3.0}, {std::nullopt})};
    const auto stats = fit_preprocess(train, {"n"}, {"cat"});
    CHECK(stats.clinical_width() == 1 + 3);
    const auto out = apply_preprocess({train[1], train[2], rec("d", 1, 1, {1.0}, {"never seen"})}, stats);
    CHECK(out[0].feature(Modality::Clinical) == std::vector<double>{0.0, 0, 0, 1});
    CHECK(out[1].feature(Modality::Clinical)[1] == 1.0);
    const auto& unseen = out[2].feature(Modality::Clinical);
    CHECK(unseen[1] == 1.0);
    CHECK(unseen[2] + unseen[3] == 0.0);
  }
  SUBCASE("feature missing everywhere") {
    const std::vector<PatientRecord> train{rec("a", 1, 1, {std::nullopt}), rec("b", 2, 0, {std::nullopt})};
    CHECK_THROWS_WITH_AS(fit_preprocess(train, {"x"}, {}), doctest::Contains("AllMissingFeature"), Error);
  }
}

TEST_CASE("stratified folds") {
  auto cohort = [](std::size_t events, std::size_t censored) {
    std::vector<PatientRecord> r;
    for (std::size_t i = 0; i < events + censored; ++i) r.push_back(rec("p" + std::to_string(i), 1.0 + i, i < events, {}));
    return r;
  };
  SUBCASE("exact divisibility") {
    const auto recs = cohort(10, 10);
    const FoldSplit s = stratified_folds(recs, 5, Rng(1));
    for (std::size_t f = 0; f < 5; ++f) {
      std::size_t ev = 0, ce = 0;
      for (auto i : s.members(f)) (recs[i].event ? ev : ce)++;
      CHECK(ev == 2);
      CHECK(ce == 2);
    }
  }
  SUBCASE("eleven events") {
    const auto recs = cohort(11, 9);
    const FoldSplit s = stratified_folds(recs, 5, Rng(2));
    std::multiset<std::size_t> counts, sizes;
    for (std::size_t f = 0; f < 5; ++f) {
      std::size_t ev = 0;
      for (auto i : s.members(f)) ev += recs[i].event;
      counts.insert(ev);
      sizes.insert(s.members(f).size());
    }
    CHECK(counts == std::multiset<std::size_t>{2, 2, 2, 2, 3});
    CHECK(sizes == std::multiset<std::size_t>{4, 4, 4, 4, 4});
  }
  SUBCASE("deterministic per seed, disjoint and covering") {
    const auto recs = cohort(13, 17);
    const FoldSplit a = stratified_folds(recs, 4, Rng(7)), b = stratified_folds(recs, 4, Rng(7));
    CHECK(a.fold_of == b.fold_of);
    CHECK(stratified_folds(recs, 4, Rng(8)).fold_of != a.fold_of);
    std::size_t total = 0;
    for (std::size_t f = 0; f < 4; ++f) total += a.members(f).size();
    CHECK(total == recs.size());
  }
  SUBCASE("too few records") {
    CHECK_THROWS_WITH_AS(stratified_folds(cohort(2, 1), 5, Rng(1)), doctest::Contains("TooFewRecords"), Error);
  }
}

TEST_CASE("synthetic cohorts") {
  SynthConfig cfg;
  cfg.seed = 7;
  const SynthCohort a = synth_cohort(cfg), b = synth_cohort(cfg);
  REQUIRE(a.cohort.records.size() == 400);
  CHECK(a.true_risk == b.true_risk);
  for (std::size_t i = 0; i < 400; ++i) CHECK(a.cohort.records[i].imaging == b.cohort.records[i].imaging);

  std::vector<double> times;
  std::vector<int> events;
  for (const auto& r : a.cohort.records) {
    times.push_back(r.time);
    events.push_back(r.event);
  }
  const double ceiling = c_index(a.true_risk, times, events);
  MESSAGE("ground-truth C-index for n=400, signal 2, seed 7: " << ceiling);
  CHECK(ceiling == oracle::brute_cindex(a.true_risk, times, events));
  // Log-hazard 2z with z ~ N(0, 1) caps Harrell's C near 0.84 at this censoring.
  CHECK(ceiling > 0.8);

  SynthConfig late = cfg;
  late.censor_max = 1e12;
  std::size_t ev = synth_cohort(late).cohort.event_count();
  CHECK(ev >= 399);

  SynthConfig null = cfg;
  null.signal_strength = 0.0;
  const auto nc = synth_cohort(null);
  std::vector<double> nt;
  std::vector<int> ne;
  for (const auto& r : nc.cohort.records) {
    nt.push_back(r.time);
    ne.push_back(r.event);
  }
  CHECK(std::abs(c_index(nc.true_risk, nt, ne) - 0.5) < 0.06);

  SynthConfig bad = cfg;
  bad.n = 5;
  CHECK_THROWS_WITH_AS(synth_cohort(bad), doctest::Contains("InvalidConfig"), Error);
}

TEST_CASE("higher latent risk means shorter survival") {
  SynthConfig cfg;
  cfg.n = 1000;
  cfg.seed = 21;
  cfg.censor_max = 1e12;
  const SynthCohort sc = synth_cohort(cfg);
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
    return r;
  };
  std::vector<double> times;
  for (const auto& r : sc.cohort.records) times.push_back(r.time);
  const auto rz = ranks(sc.true_risk), rt = ranks(times);
  const double n = static_cast<double>(rz.size()), mean = (n - 1) / 2;
  double num = 0, dz = 0, dt = 0;
  for (std::size_t i = 0; i < rz.size(); ++i) {
    num += (rz[i] - mean) * (rt[i] - mean);
    dz += (rz[i] - mean) * (rz[i] - mean);
    dt += (rt[i] - mean) * (rt[i] - mean);
  }
  const double rho = num / std::sqrt(dz * dt);
  // Two-sided p < 0.01 under the null needs |rho| sqrt(n - 1) > 2.576.
  CHECK(rho * std::sqrt(n - 1) < -2.576);
}

TEST_CASE("identity preprocessing is idempotent") {
  const std::vector<PatientRecord> recs{rec("a", 1, 1, {0.25, -1.5}), rec("b", 2, 0, {3.0, 0.0})};
  const auto out = apply_preprocess(recs, PreprocessStats::identity({"x", "y"}));
  CHECK(out[0].feature(Modality::Clinical) == std::vector<double>{0.25, -1.5});
  CHECK(out[1].feature(Modality::Clinical) == std::vector<double>{3.0, 0.0});
}

TEST_CASE("fold event fractions track the cohort") {
  SynthConfig cfg;
  cfg.seed = 5;
  const Cohort c = synth_cohort(cfg).cohort;
  const FoldSplit s = stratified_folds(c.records, 5, Rng(5));
  const double overall = static_cast<double>(c.event_count()) / static_cast<double>(c.records.size());
  for (std::size_t f = 0; f < 5; ++f) {
    const auto m = s.members(f);
    double ev = 0;
    for (auto i : m) ev += c.records[i].event;
    CHECK(std::abs(ev / static_cast<double>(m.size()) - overall) <= 1.0 / static_cast<double>(m.size()));
  }
}
