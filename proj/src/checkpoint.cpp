#include <map>

#include "eagle/csv.hpp"
#include "eagle/error.hpp"
#include "eagle/model.hpp"
#include "eagle/serialize.hpp"

namespace eagle {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  json j;
  json dims, enc;
  for (Modality m : kModalities) {
    dims[std::string(modality_name(m))] = c.input_dims[index_of(m)];
    enc[std::string(modality_name(m))] = c.encoder_layers[index_of(m)];
  }
  j["input_dims"] = dims;
  j["encoder_layers"] = enc;
  j["common_dim"] = c.common_dim;
  j["attention_heads"] = c.attention_heads;
  j["attention_dropout"] = c.attention_dropout;
  j["fusion_layers"] = c.fusion_layers;
  j["dropout"] = c.dropout;
  j["aux_weight"] = c.aux_weight;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  for (Modality m : kModalities) {
    const std::string name(modality_name(m));
    c.input_dims[index_of(m)] = j.at("input_dims").at(name).get<std::size_t>();
    c.encoder_layers[index_of(m)] = j.at("encoder_layers").at(name).get<std::vector<std::size_t>>();
  }
  c.common_dim = j.at("common_dim").get<std::size_t>();
  c.attention_heads = j.at("attention_heads").get<std::size_t>();
  c.attention_dropout = j.at("attention_dropout").get<double>();
  c.fusion_layers = j.at("fusion_layers").get<std::vector<std::size_t>>();
  c.dropout = j.at("dropout").get<double>();
  c.aux_weight = j.at("aux_weight").get<double>();
  return c;
}

namespace {

json tensor_to_json(const std::string& name, const Tensor& t) {
  return {{"name", name}, {"shape", t.shape()}, {"data", t.values()}};
}

}  // namespace

json stats_to_json(const PreprocessStats& s) {
  json j;
  j["numeric_schema"] = s.numeric_schema;
  j["categorical_schema"] = s.categorical_schema;
  j["dropped"] = s.dropped;
  j["numeric"] = json::array();
  for (const auto& n : s.numeric)
    j["numeric"].push_back(
        {{"name", n.name}, {"source_index", n.source_index}, {"median", n.median}, {"mean", n.mean}, {"stdev", n.stdev}});
  j["categorical"] = json::array();
  for (const auto& c : s.categorical) j["categorical"].push_back({{"name", c.name}, {"categories", c.categories}});
  return j;
}

PreprocessStats stats_from_json(const json& j) {
  PreprocessStats s;
  s.numeric_schema = j.at("numeric_schema").get<std::vector<std::string>>();
  s.categorical_schema = j.at("categorical_schema").get<std::vector<std::string>>();
  s.dropped = j.at("dropped").get<std::vector<std::string>>();
  for (const auto& n : j.at("numeric"))
    s.numeric.push_back({n.at("name").get<std::string>(), n.at("source_index").get<std::size_t>(),
                         n.at("median").get<double>(), n.at("mean").get<double>(), n.at("stdev").get<double>()});
  for (const auto& c : j.at("categorical"))
    s.categorical.push_back({c.at("name").get<std::string>(), c.at("categories").get<std::vector<std::string>>()});
  return s;
}

namespace {

void load_tensors(const json& arr, const char* what, const std::function<void(const std::function<void(const std::string&, Tensor&)>&)>& visit) {
  std::map<std::string, const json*> by_name;
  for (const auto& t : arr) by_name[t.at("name").get<std::string>()] = &t;
  std::size_t used = 0;
  visit([&](const std::string& name, Tensor& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail(ErrorCode::SchemaMismatch, std::string("checkpoint ") + what + " lacks '" + name + "'");
    const auto shape = it->second->at("shape").get<Shape>();
    if (shape != dst.shape())
      fail(ErrorCode::SchemaMismatch, "checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                                          ", config implies " + shape_str(dst.shape()));
    dst = Tensor(shape, it->second->at("data").get<std::vector<double>>());
    ++used;
  });
  if (used != by_name.size())
    fail(ErrorCode::SchemaMismatch, std::string("checkpoint ") + what + " has unexpected extra tensors");
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["format"] = "eagle-checkpoint";
  j["version"] = 1;
  j["config"] = config_to_json(ckpt.params.config);
  j["params"] = json::array();
  ckpt.params.for_each_param(
      [&](const std::string& name, const Tensor& t) { j["params"].push_back(tensor_to_json(name, t)); });
  j["buffers"] = json::array();
  ckpt.params.for_each_buffer(
      [&](const std::string& name, const Tensor& t) { j["buffers"].push_back(tensor_to_json(name, t)); });
  j["preprocess"] = stats_to_json(ckpt.preprocess);
  j["fold"] = ckpt.fold;
  j["validation_ids"] = ckpt.validation_ids;
  return j.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", std::string()) != "eagle-checkpoint")
    fail(ErrorCode::SchemaMismatch, "checkpoint: field 'format' is not eagle-checkpoint");
  Checkpoint c;
  try {
    const ModelConfig cfg = config_from_json(j.at("config"));
    c.params = init_params(cfg, Rng(0));
    load_tensors(j.at("params"), "params", [&](const auto& fn) { c.params.for_each_param(fn); });
    load_tensors(j.at("buffers"), "buffers", [&](const auto& fn) { c.params.for_each_buffer(fn); });
    c.preprocess = stats_from_json(j.at("preprocess"));
    c.fold = j.value("fold", -1);
    c.validation_ids = j.value("validation_ids", std::vector<std::string>{});
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("checkpoint field: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  csv::write_text(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(csv::read_text(path)); }

}  // namespace eagle
