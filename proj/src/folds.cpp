#include "eagle/cohort.hpp"
#include "eagle/error.hpp"

namespace eagle {

std::vector<std::size_t> FoldSplit::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::map<std::string, std::size_t> FoldSplit::assignment() const {
  std::map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], fold_of[i]);
  return out;
}

FoldSplit stratified_folds(const std::vector<PatientRecord>& records, std::size_t k, Rng rng) {
  if (k < 2) fail(ErrorCode::TooFewRecords, "fold count must be at least 2, got " + std::to_string(k));
  if (records.size() < k)
    fail(ErrorCode::TooFewRecords, std::to_string(records.size()) + " records cannot fill " + std::to_string(k) + " folds");
  std::vector<std::size_t> events, censored;
  for (std::size_t i = 0; i < records.size(); ++i) (records[i].event ? events : censored).push_back(i);
  Rng event_rng = rng.derive(stream::kFolds, 1);
  Rng censor_rng = rng.derive(stream::kFolds, 0);
  event_rng.shuffle(events);
  censor_rng.shuffle(censored);

  FoldSplit split;
  split.k = k;
  split.fold_of.assign(records.size(), 0);
  for (const auto& r : records) split.ids.push_back(r.id);
  std::size_t next = 0;
  for (std::size_t i : events) split.fold_of[i] = next++ % k;
  for (std::size_t i : censored) split.fold_of[i] = next++ % k;
  return split;
}

}  // namespace eagle
