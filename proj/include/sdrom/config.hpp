#pragma once

#include "sdrom/baselines.hpp"
#include "sdrom/datagen.hpp"
#include "sdrom/model.hpp"
#include "sdrom/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <initializer_list>
#include <set>
#include <string>

namespace sdrom {

using json = nlohmann::json;

// Reads fields of one JSON object, remembering which keys were consumed so
// that leftovers can be rejected by name.
class JsonReader {
 public:
  JsonReader(const json& j, std::string context);

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& at(const std::string& key);

  template <class T>
  void get(const std::string& key, T& field) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(key, e.what());
    }
  }

  // Nested object reader; marks the key as consumed.
  JsonReader child(const std::string& key);

  // Throws schema_violation naming the first unknown key.
  void finish() const;

  [[noreturn]] void fail(const std::string& key, const std::string& why) const;
  const std::string& context() const { return context_; }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const json& j);

json to_json(const ThetaTreatment& t);
ThetaTreatment treatment_from_json(const json& j);

json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);

json to_json(const GeneratorSpec& spec);
GeneratorSpec generator_spec_from_json(const json& j);

json to_json(const SolverBaselineConfig& cfg);
SolverBaselineConfig solver_baseline_config_from_json(const json& j);

// Missing file -> missing_input; unparsable -> schema_violation.
json read_json_file(const std::filesystem::path& path);

}  // namespace sdrom
