#include "eagle/cohort.hpp"

#include <set>
#include <unordered_map>

#include "json.hpp"

#include "eagle/csv.hpp"
#include "eagle/error.hpp"

namespace eagle {

using nlohmann::json;

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::Imaging: return "imaging";
    case Modality::Text: return "text";
    case Modality::Clinical: return "clinical";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  for (Modality m : kModalities)
    if (modality_name(m) == name) return m;
  fail(ErrorCode::InvalidConfig, "unknown modality '" + std::string(name) + "'");
}

const std::vector<double>& PatientRecord::embedding(Modality m) const {
  switch (m) {
    case Modality::Imaging: return imaging;
    case Modality::Text: return text;
    default: fail(ErrorCode::InvalidConfig, "clinical features are not an embedding");
  }
}

std::size_t Manifest::dim(Modality m) const {
  for (const auto& mod : modalities)
    if (mod.name == modality_name(m)) return mod.dim;
  fail(ErrorCode::SchemaMismatch, "manifest has no modality '" + std::string(modality_name(m)) + "'");
}

Manifest parse_manifest(const std::string& json_text, std::filesystem::path base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("manifest: ") + e.what());
  }
  Manifest m;
  m.base_dir = std::move(base_dir);
  try {
    m.name = j.value("name", std::string("cohort"));
    const auto& clin = j.at("clinical");
    m.numeric = clin.value("numeric", std::vector<std::string>{});
    m.categorical = clin.value("categorical", std::vector<std::string>{});
    m.clinical_file = clin.value("file", std::string());
    for (const auto& mod : j.at("modalities")) {
      ModalityFiles f;
      f.name = mod.at("name").get<std::string>();
      f.dim = mod.at("dim").get<std::size_t>();
      f.files = mod.at("files").get<std::vector<std::string>>();
      m.modalities.push_back(std::move(f));
    }
    m.outcomes_file = j.at("outcomes").at("file").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("manifest field: ") + e.what());
  }
  std::set<std::string> seen;
  for (const auto& mod : m.modalities) {
    if (mod.name != "imaging" && mod.name != "text")
      fail(ErrorCode::SchemaMismatch, "manifest modality name must be imaging or text, got '" + mod.name + "'");
    if (!seen.insert(mod.name).second) fail(ErrorCode::SchemaMismatch, "manifest repeats modality '" + mod.name + "'");
    if (mod.dim == 0) fail(ErrorCode::SchemaMismatch, "manifest modality '" + mod.name + "' has dim 0");
    if (mod.files.empty()) fail(ErrorCode::SchemaMismatch, "manifest modality '" + mod.name + "' lists no files");
  }
  for (const char* req : {"imaging", "text"})
    if (!seen.count(req)) fail(ErrorCode::SchemaMismatch, std::string("manifest lacks modality '") + req + "'");
  if ((!m.numeric.empty() || !m.categorical.empty()) && m.clinical_file.empty())
    fail(ErrorCode::SchemaMismatch, "manifest declares clinical features but no clinical.file");
  return m;
}

std::string manifest_to_json(const Manifest& m) {
  json j;
  j["name"] = m.name;
  j["clinical"] = {{"numeric", m.numeric}, {"categorical", m.categorical}, {"file", m.clinical_file}};
  j["modalities"] = json::array();
  for (const auto& mod : m.modalities)
    j["modalities"].push_back({{"name", mod.name}, {"dim", mod.dim}, {"files", mod.files}});
  j["outcomes"] = {{"file", m.outcomes_file}};
  return j.dump(2) + "\n";
}

std::size_t Cohort::event_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.event == 1;
  return n;
}

void validate_cohort(const Cohort& cohort) {
  std::set<std::string> ids;
  const std::size_t img = cohort.manifest.dim(Modality::Imaging);
  const std::size_t txt = cohort.manifest.dim(Modality::Text);
  for (const auto& r : cohort.records) {
    if (!ids.insert(r.id).second) fail(ErrorCode::DuplicateId, "patient id '" + r.id + "' appears twice");
    if (!(r.time > 0.0)) fail(ErrorCode::ParseError, "patient '" + r.id + "': time must be positive");
    if (r.event != 0 && r.event != 1) fail(ErrorCode::ParseError, "patient '" + r.id + "': event must be 0 or 1");
    if (r.imaging.size() != img)
      fail(ErrorCode::DimensionMismatch, "patient '" + r.id + "': imaging has " + std::to_string(r.imaging.size()) +
                                             " values, manifest declares " + std::to_string(img));
    if (r.text.size() != txt)
      fail(ErrorCode::DimensionMismatch, "patient '" + r.id + "': text has " + std::to_string(r.text.size()) +
                                             " values, manifest declares " + std::to_string(txt));
    if (r.clinical_numeric.size() != cohort.manifest.numeric.size() ||
        r.clinical_categorical.size() != cohort.manifest.categorical.size())
      fail(ErrorCode::DimensionMismatch, "patient '" + r.id + "': clinical columns disagree with manifest");
  }
  if (cohort.records.empty()) fail(ErrorCode::TooFewRecords, "cohort has no records");
  if (cohort.event_count() == 0) fail(ErrorCode::NoEvents, "cohort has no events (all event=0)");
}

namespace {

std::filesystem::path resolve(const Manifest& m, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : m.base_dir / path;
}

void require_id_column(const csv::Table& t, const std::filesystem::path& path) {
  if (t.header.empty() || t.header[0] != "id")
    fail(ErrorCode::ParseError, path.string() + ": first column must be 'id'");
}

std::unordered_map<std::string, std::size_t> index_rows(const csv::Table& t, const std::filesystem::path& path) {
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    if (!idx.emplace(t.rows[i][0], i).second)
      fail(ErrorCode::DuplicateId, path.string() + ": id '" + t.rows[i][0] + "' appears twice");
  return idx;
}

}  // namespace

Cohort load_cohort(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) fail(ErrorCode::MissingFile, "manifest " + manifest_path.string());
  Cohort c;
  c.manifest = parse_manifest(csv::read_text(manifest_path), manifest_path.parent_path());
  const Manifest& m = c.manifest;

  const auto outcomes_path = resolve(m, m.outcomes_file);
  const csv::Table outcomes = csv::read(outcomes_path);
  require_id_column(outcomes, outcomes_path);
  const auto tcol = outcomes.column("time");
  const auto ecol = outcomes.column("event");
  if (!tcol || !ecol) fail(ErrorCode::ParseError, outcomes_path.string() + ": needs columns id,time,event");
  for (const auto& row : outcomes.rows) {
    PatientRecord r;
    r.id = row[0];
    const std::string where = outcomes_path.string() + " id '" + r.id + "'";
    r.time = csv::parse_double(row[*tcol], where + " time");
    const double ev = csv::parse_double(row[*ecol], where + " event");
    if (ev != 0.0 && ev != 1.0) fail(ErrorCode::ParseError, where + ": event must be 0 or 1");
    r.event = static_cast<int>(ev);
    c.records.push_back(std::move(r));
  }

  for (const auto& mod : m.modalities) {
    const Modality which = parse_modality(mod.name);
    std::size_t total = 0;
    for (const auto& file : mod.files) {
      const auto path = resolve(m, file);
      const csv::Table t = csv::read(path);
      require_id_column(t, path);
      if (t.rows.size() != c.records.size())
        fail(ErrorCode::DimensionMismatch, path.string() + ": " + std::to_string(t.rows.size()) + " rows for " +
                                               std::to_string(c.records.size()) + " patients");
      const auto idx = index_rows(t, path);
      const std::size_t width = t.header.size() - 1;
      total += width;
      for (auto& r : c.records) {
        auto it = idx.find(r.id);
        if (it == idx.end()) fail(ErrorCode::DimensionMismatch, path.string() + ": no row for id '" + r.id + "'");
        auto& dst = which == Modality::Imaging ? r.imaging : r.text;
        const auto& row = t.rows[it->second];
        for (std::size_t j = 1; j < row.size(); ++j)
          dst.push_back(csv::parse_double(row[j], path.string() + " id '" + r.id + "' column " + t.header[j]));
      }
    }
    if (total != mod.dim)
      fail(ErrorCode::DimensionMismatch, "modality '" + mod.name + "': files provide " + std::to_string(total) +
                                             " columns, manifest declares dim " + std::to_string(mod.dim));
  }

  if (!m.clinical_file.empty()) {
    const auto path = resolve(m, m.clinical_file);
    const csv::Table t = csv::read(path);
    require_id_column(t, path);
    if (t.rows.size() != c.records.size())
      fail(ErrorCode::DimensionMismatch, path.string() + ": " + std::to_string(t.rows.size()) + " rows for " +
                                             std::to_string(c.records.size()) + " patients");
    const auto idx = index_rows(t, path);
    std::vector<std::size_t> ncols, ccols;
    for (const auto& name : m.numeric) {
      auto col = t.column(name);
      if (!col) fail(ErrorCode::SchemaMismatch, path.string() + ": missing numeric column '" + name + "'");
      ncols.push_back(*col);
    }
    for (const auto& name : m.categorical) {
      auto col = t.column(name);
      if (!col) fail(ErrorCode::SchemaMismatch, path.string() + ": missing categorical column '" + name + "'");
      ccols.push_back(*col);
    }
    for (auto& r : c.records) {
      auto it = idx.find(r.id);
      if (it == idx.end()) fail(ErrorCode::DimensionMismatch, path.string() + ": no row for id '" + r.id + "'");
      const auto& row = t.rows[it->second];
      for (std::size_t k = 0; k < ncols.size(); ++k) {
        const auto& cell = row[ncols[k]];
        if (cell.empty())
          r.clinical_numeric.emplace_back(std::nullopt);
        else
          r.clinical_numeric.emplace_back(csv::parse_double(cell, path.string() + " id '" + r.id + "' " + m.numeric[k]));
      }
      for (std::size_t k = 0; k < ccols.size(); ++k) {
        const auto& cell = row[ccols[k]];
        r.clinical_categorical.emplace_back(cell.empty() ? std::nullopt : std::optional<std::string>(cell));
      }
    }
  }

  validate_cohort(c);
  return c;
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest m = cohort.manifest;
  m.clinical_file = "clinical.csv";
  m.outcomes_file = "outcomes.csv";
  for (auto& mod : m.modalities) mod.files = {mod.name + ".csv"};
  csv::write_text(dir / "manifest.json", manifest_to_json(m));

  std::string out = "id,time,event\n";
  for (const auto& r : cohort.records) out += r.id + "," + csv::format_double(r.time) + "," + std::to_string(r.event) + "\n";
  csv::write_text(dir / "outcomes.csv", out);

  for (const auto& mod : m.modalities) {
    const Modality which = parse_modality(mod.name);
    out = "id";
    for (std::size_t j = 0; j < mod.dim; ++j) out += "," + mod.name + "_" + std::to_string(j);
    out += "\n";
    for (const auto& r : cohort.records) {
      out += r.id;
      for (double v : r.embedding(which)) out += "," + csv::format_double(v);
      out += "\n";
    }
    csv::write_text(dir / (mod.name + ".csv"), out);
  }

  out = "id";
  for (const auto& n : m.numeric) out += "," + n;
  for (const auto& n : m.categorical) out += "," + n;
  out += "\n";
  for (const auto& r : cohort.records) {
    out += r.id;
    for (const auto& v : r.clinical_numeric) out += "," + (v ? csv::format_double(*v) : std::string());
    for (const auto& v : r.clinical_categorical) out += "," + v.value_or(std::string());
    out += "\n";
  }
  csv::write_text(dir / "clinical.csv", out);
}

}  // namespace eagle
