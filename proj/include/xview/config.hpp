#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xview/aggregation.hpp"
#include "xview/alignment.hpp"
#include "xview/retrieval.hpp"
#include "xview/synth.hpp"

namespace xview {

// Every pipeline knob, with defaults. Serialized as flat TOML-style
// "key = value" lines grouped under [section] headers:
//
//   [aggregation]
//   scales = [1, 2, 3]
//   alpha = 6.0
//
// Dotted keys ("aggregation.alpha = 6") work too. Unknown keys are rejected.
struct PipelineConfig {
  AggregationSpec aggregation;
  AlignmentOptions alignment;
  std::vector<std::size_t> ks{1, 5, 10};
  std::size_t search_depth = 0;  // 0 = rank the whole gallery
  SearchMode search_mode = SearchMode::Aligned;
  SynthSpec synth;
  std::uint32_t heatmap_height = 0;  // 0 = no upsampling
  std::uint32_t heatmap_width = 0;

  // Effective values of every key, nested by section.
  nlohmann::json snapshot() const;
  void validate() const;
};

PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

// Applies one "section.key" assignment (value already parsed). Throws
// BadArgument for unknown keys or wrong types.
void apply_config_value(PipelineConfig& config, std::string_view key, const nlohmann::json& value);

// Parses a TOML-style scalar or flat array: "str", true/false, ints, floats, [..].
nlohmann::json parse_config_scalar(std::string_view text);

}  // namespace xview
