#pragma once

#include <filesystem>

#include "sage/config.hpp"

namespace sage {

// Runs phantom (optional) -> train-shape -> gen-shapes -> align ->
// estimate-stats -> merge -> score -> evaluate, persisting every stage's
// artifacts plus provenance.json under config.out_root. Throws with the stage
// name on the first failure; artifacts written so far are kept.
std::filesystem::path pipeline_run(const RunConfig& config);

// The seven stage directory names, in dataflow order.
const std::vector<std::string>& pipeline_stage_names();

}  // namespace sage
