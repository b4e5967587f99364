#pragma once

#include <json.hpp>

#include "wsgg/config.hpp"

namespace wsgg {

// Runs parse → ground-train → pseudo-gen → sgg-train → sgg-predict → eval,
// writing every intermediate artifact plus report.json and plot CSVs under
// config.out_dir. Stage failures abort with the stage name in the message.
// Deterministic given config and seed.
nlohmann::json run_pipeline(const PipelineConfig& config);

}  // namespace wsgg
