#pragma once

#include <string>
#include <vector>

#include "faceswap/pipeline.hpp"

namespace faceswap::config {

// Flat INI config with sections [model], [train], [providers], [video].
// Every key has a documented default; unknown sections or keys are hard
// errors. Overrides use "section.key=value".
pipeline::Config load_file(const std::string& path);
void apply_override(pipeline::Config& cfg, const std::string& assignment);
pipeline::Config make(const std::string& path /*empty = defaults*/,
                      const std::vector<std::string>& overrides);

}  // namespace faceswap::config
