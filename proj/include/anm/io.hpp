#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "anm/mdp.hpp"

namespace anm {

using nlohmann::json;

// Schema "anm-gmm/1": one fitted scalar process model.
json model_to_json(const GmmMarkovModel& model);
GmmMarkovModel model_from_json(const json& j);
void save_model(const GmmMarkovModel& model, const std::filesystem::path& path);
GmmMarkovModel load_model(const std::filesystem::path& path);

// Schema "anm-instance/1": network, devices, prices and slack voltage. The
// stochastic models live in separate anm-gmm/1 files; attach_models wires
// them in. Loaders reject unknown schema versions and invalid instances.
json instance_to_json(const AnmSystem& sys);
AnmSystem instance_from_json(const json& j);
void save_instance(const AnmSystem& sys, const std::filesystem::path& path);
AnmSystem load_instance(const std::filesystem::path& path);

// Schema "anm-state/1": a saved simulator state for one-shot planning.
json state_to_json(const SystemState& state);
SystemState state_from_json(const json& j);

void attach_models(AnmSystem& sys, const std::filesystem::path& load_model,
                   const std::filesystem::path& wind_model,
                   const std::filesystem::path& ir_model);

// Writes via a temporary file in the same directory, then renames, so
// readers never observe partial output.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

json read_json_file(const std::filesystem::path& path);

}  // namespace anm
