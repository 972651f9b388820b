#pragma once

// Command-line workflow: JSON run configuration, per-stage commands that
// read and write container artifacts, and the fused `run`.
//
// Layout under the output directory, one subdirectory per variant:
//   features/ pca/ | eof/ reduced/ basis/ recon_model/ recon/ nearest.json
//   corr_model/ corrections/ corrected/ report.json provenance.json
// Direct variants skip recon_model/ and recon/; their station network lives
// in corr_model/ and its full-grid prediction in corrected/.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigpca/data.hpp"
#include "sigpca/evaluate.hpp"
#include "sigpca/pipeline.hpp"

namespace sigpca::cli {

namespace fs = std::filesystem;

struct RunConfig {
  pipeline::PipelineConfig pipeline;
  data::SyntheticSpec synthetic;
  fs::path data_dir = "data";  // holds field/, stations/ and optionally truth/
  fs::path out_dir = "out";
  std::vector<pipeline::Variant> variants{pipeline::Variant::sigpca_dk};
  bool evaluate = true;
  evaluate::EvalOptions eval;
  std::vector<double> sweep_x{1, 2, 4, 8, 12, 16, 20};
  std::size_t sweep_repeats = 5;
};

/// Parses the JSON schema documented in the README; unknown keys are
/// rejected with a ConfigError naming them.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const fs::path& file);
nlohmann::json to_json(const RunConfig& cfg);

/// Sets subset, init and shuffle seeds to seed, seed + 1, seed + 2.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"signatures",    "reduce",  "train-recon", "reconstruct",
                                              "train-correct", "correct", "evaluate",    "sweep"};
  return names;
}

fs::path variant_dir(const RunConfig& cfg, pipeline::Variant v);

void cmd_synth(const RunConfig& cfg, const fs::path& out, std::ostream& log);
void cmd_stage(const std::string& stage, const RunConfig& cfg, pipeline::Variant v, std::ostream& log);
/// Every stage except `sweep`, for every configured variant.
void cmd_run(const RunConfig& cfg, std::ostream& log);

/// Full command-line entry point; returns the process exit code.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sigpca::cli
