#include "xview/config.hpp"

#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "xview/error.hpp"
#include "xview/io_util.hpp"

namespace xview {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing "# ..." comment that is not inside a string.
std::string strip_comment(std::string_view line) {
  bool in_string = false;
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string) {
      if (c == '\\' && quote == '"') {
        ++i;
      } else if (c == quote) {
        in_string = false;
      }
    } else if (c == '"' || c == '\'') {
      in_string = true;
      quote = c;
    } else if (c == '#') {
      return std::string(line.substr(0, i));
    }
  }
  return std::string(line);
}

[[noreturn]] void bad_type(std::string_view key, const char* expected) {
  fail(ErrorKind::BadArgument, "config key '" + std::string(key) + "' expects " + expected);
}

double as_number(std::string_view key, const json& v) {
  if (!v.is_number()) bad_type(key, "a number");
  return v.get<double>();
}

std::uint64_t as_count(std::string_view key, const json& v) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) bad_type(key, "a non-negative integer");
  return v.get<std::uint64_t>();
}

bool as_bool(std::string_view key, const json& v) {
  if (!v.is_boolean()) bad_type(key, "true or false");
  return v.get<bool>();
}

std::string as_string(std::string_view key, const json& v) {
  if (!v.is_string()) bad_type(key, "a string");
  return v.get<std::string>();
}

template <typename T>
std::vector<T> as_count_list(std::string_view key, const json& v) {
  if (!v.is_array()) bad_type(key, "an array of non-negative integers");
  std::vector<T> out;
  for (const auto& item : v) out.push_back(static_cast<T>(as_count(key, item)));
  return out;
}

using Setter = std::function<void(PipelineConfig&, std::string_view, const json&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"pooling.kind",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.aggregation.pooling.kind = parse_pool_kind(as_string(k, v));
       }},
      {"pooling.p",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.aggregation.pooling.p = as_number(k, v); }},
      {"pooling.clamp_negative",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.aggregation.pooling.clamp_negative = as_bool(k, v);
       }},
      {"aggregation.scales",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.aggregation.scales = as_count_list<std::uint32_t>(k, v);
       }},
      {"aggregation.alpha",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.aggregation.alpha = as_number(k, v); }},
      {"aggregation.normalize_regions",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.aggregation.normalize_regions = as_bool(k, v);
       }},
      {"alignment.dim",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         const auto d = as_count(k, v);
         c.alignment.dim = d == 0 ? std::nullopt : std::optional<Eigen::Index>(static_cast<Eigen::Index>(d));
       }},
      {"alignment.variance_fraction",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         const double f = as_number(k, v);
         c.alignment.variance_fraction = f == 0.0 ? std::nullopt : std::optional<double>(f);
       }},
      {"alignment.pairing",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.alignment.pairing = parse_pairing(as_string(k, v));
       }},
      {"alignment.strict_rotation",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.alignment.strict_rotation = as_bool(k, v); }},
      {"retrieval.ks",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.ks = as_count_list<std::size_t>(k, v); }},
      {"retrieval.depth",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.search_depth = as_count(k, v); }},
      {"retrieval.mode",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.search_mode = parse_search_mode(as_string(k, v));
       }},
      {"synth.num_locations",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.synth.num_locations = static_cast<std::uint32_t>(as_count(k, v));
       }},
      {"synth.views_per_location_drone",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.synth.views_per_location_drone = static_cast<std::uint32_t>(as_count(k, v));
       }},
      {"synth.latent_dim",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.synth.latent_dim = static_cast<std::uint32_t>(as_count(k, v));
       }},
      {"synth.ambient_dim",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.synth.ambient_dim = static_cast<std::uint32_t>(as_count(k, v));
       }},
      {"synth.domain_rotation_angle_scale",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.synth.domain_rotation_angle_scale = as_number(k, v);
       }},
      {"synth.domain_offset_norm",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.synth.domain_offset_norm = as_number(k, v); }},
      {"synth.noise_sigma",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.synth.noise_sigma = as_number(k, v); }},
      {"synth.location_jitter",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.synth.location_jitter = as_number(k, v); }},
      {"synth.shared_domain_map",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.synth.shared_domain_map = as_bool(k, v); }},
      {"synth.seed",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.synth.seed = as_count(k, v); }},
      {"synth.dataset_name",
       [](PipelineConfig& c, std::string_view k, const json& v) { c.synth.dataset_name = as_string(k, v); }},
      {"heatmap.height",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.heatmap_height = static_cast<std::uint32_t>(as_count(k, v));
       }},
      {"heatmap.width",
       [](PipelineConfig& c, std::string_view k, const json& v) {
         c.heatmap_width = static_cast<std::uint32_t>(as_count(k, v));
       }},
  };
  return table;
}

}  // namespace

json parse_config_scalar(std::string_view text) {
  std::string value = trim(text);
  // TOML literal strings: 'abc' -> "abc"
  if (value.size() >= 2 && value.front() == '\'' && value.back() == '\'') {
    return json(value.substr(1, value.size() - 2));
  }
  try {
    return json::parse(value);
  } catch (const json::parse_error&) {
    fail(ErrorKind::BadArgument, "cannot parse config value: " + value);
  }
}

void apply_config_value(PipelineConfig& config, std::string_view key, const json& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) fail(ErrorKind::BadArgument, "unknown config key: " + std::string(key));
  it->second(config, key, value);
}

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig config;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        fail(ErrorKind::BadArgument, "config line " + std::to_string(line_no) + ": bad section header");
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::BadArgument, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    apply_config_value(config, full, parse_config_scalar(std::string_view(line).substr(eq + 1)));
  }
  config.validate();
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file_text(path));
}

void PipelineConfig::validate() const {
  aggregation.validate();
  if (ks.empty()) fail(ErrorKind::BadArgument, "retrieval.ks must be non-empty");
  for (std::size_t k : ks) {
    if (k < 1) fail(ErrorKind::BadArgument, "retrieval.ks entries must be >= 1");
  }
  if (alignment.variance_fraction &&
      !(*alignment.variance_fraction > 0.0 && *alignment.variance_fraction <= 1.0)) {
    fail(ErrorKind::BadArgument, "alignment.variance_fraction must lie in (0, 1]");
  }
  synth.validate();
  if ((heatmap_height == 0) != (heatmap_width == 0)) {
    fail(ErrorKind::BadArgument, "heatmap.height and heatmap.width must be set together");
  }
}

json PipelineConfig::snapshot() const {
  return json{
      {"pooling",
       {{"kind", std::string(to_string(aggregation.pooling.kind))},
        {"p", aggregation.pooling.p},
        {"clamp_negative", aggregation.pooling.clamp_negative}}},
      {"aggregation",
       {{"scales", aggregation.scales},
        {"alpha", aggregation.alpha},
        {"normalize_regions", aggregation.normalize_regions}}},
      {"alignment",
       {{"dim", alignment.dim ? *alignment.dim : 0},
        {"variance_fraction", alignment.variance_fraction ? *alignment.variance_fraction : 0.0},
        {"pairing", std::string(to_string(alignment.pairing))},
        {"strict_rotation", alignment.strict_rotation}}},
      {"retrieval",
       {{"ks", ks}, {"depth", search_depth}, {"mode", std::string(to_string(search_mode))}}},
      {"synth",
       {{"num_locations", synth.num_locations},
        {"views_per_location_drone", synth.views_per_location_drone},
        {"latent_dim", synth.latent_dim},
        {"ambient_dim", synth.ambient_dim},
        {"domain_rotation_angle_scale", synth.domain_rotation_angle_scale},
        {"domain_offset_norm", synth.domain_offset_norm},
        {"noise_sigma", synth.noise_sigma},
        {"location_jitter", synth.location_jitter},
        {"shared_domain_map", synth.shared_domain_map},
        {"seed", synth.seed},
        {"dataset_name", synth.dataset_name}}},
      {"heatmap", {{"height", heatmap_height}, {"width", heatmap_width}}},
  };
}

}  // namespace xview
