#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

namespace sage {

// Shared checkpoint container: magic, kind tag, JSON header, binary body.
void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const nlohmann::json& header,
                     const std::function<void(std::ostream&)>& write_body);

// Validates the magic and kind, returns the header, leaves `in` at the body.
nlohmann::json open_checkpoint(std::ifstream& in, const std::filesystem::path& path,
                               const std::string& expected_kind);

// Reads just the kind tag (for dispatching).
std::string checkpoint_kind(const std::filesystem::path& path);

}  // namespace sage
