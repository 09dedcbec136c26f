#pragma once

#include <iosfwd>
#include <string>

#include "bscaling/core.hpp"

namespace bscaling {

inline constexpr int kModelFormatVersion = 1;

/// JSON model file. `with_meta` adds a creation timestamp; everything
/// else is a deterministic function of the model.
std::string model_to_json(const FittedBScaling& model, bool with_meta);
FittedBScaling model_from_json(const std::string& text);

void save_model(const FittedBScaling& model, const std::string& path, bool with_meta);
/// Throws Parse on malformed or inconsistent files.
FittedBScaling load_model(const std::string& path);

}  // namespace bscaling
