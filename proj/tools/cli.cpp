#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xview/aggregation.hpp"
#include "xview/alignment.hpp"
#include "xview/config.hpp"
#include "xview/error.hpp"
#include "xview/evaluation.hpp"
#include "xview/io_util.hpp"
#include "xview/retrieval.hpp"
#include "xview/synth.hpp"

namespace xview::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::string config_path;
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;
  bool json_output = false;
};

struct Context {
  PipelineConfig config;
  unsigned threads = 1;
  bool json_output = false;
  std::ostream& out;
};

std::uint64_t hash_files(const std::vector<fs::path>& paths) {
  Fnv1a64 h;
  for (const auto& p : paths) {
    const auto bytes = read_file_bytes(p);
    h.update(bytes);
  }
  return h.digest();
}

json make_meta(const Context& ctx, std::string_view command, std::uint64_t input_hash) {
  return json{{"command", command}, {"config", ctx.config.snapshot()}, {"input_hash", hex64(input_hash)}};
}

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  auto number = [&](std::string_view s) {
    std::string t(s);
    try {
      std::size_t used = 0;
      const double v = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::BadArgument, "cannot parse alpha value '" + t + "'");
    }
  };
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const double lo = number(std::string_view(text).substr(0, dots));
    const double hi = number(std::string_view(text).substr(dots + 2));
    if (lo != std::floor(lo) || hi != std::floor(hi) || hi < lo) {
      fail(ErrorKind::BadArgument, "alpha range must be integer bounds lo..hi with lo <= hi");
    }
    for (double a = lo; a <= hi; a += 1.0) out.push_back(a);
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = std::string_view(text).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    out.push_back(number(piece));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t k = 0;
    auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), k);
    if (ec != std::errc() || ptr != piece.data() + piece.size() || k < 1) {
      fail(ErrorKind::BadArgument, "cannot parse K list '" + text + "'");
    }
    out.push_back(k);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  fs::path p = path;
  p.replace_extension(suffix);
  return p;
}

// ---------------------------------------------------------------------------

void cmd_aggregate(Context& ctx, const fs::path& manifest_path, const fs::path& out_path,
                   const std::string& domain_filter, const std::string& debug_path) {
  const Dataset dataset = load_dataset(manifest_path);
  std::vector<fs::path> inputs{manifest_path};
  for (const auto& e : dataset.entries()) inputs.push_back(e.resolved_path);

  DescriptorSet set = aggregate_dataset(dataset, ctx.config.aggregation, ctx.threads);
  if (!domain_filter.empty()) set = set.filter(parse_domain(domain_filter));
  write_descriptor_set(out_path, set, make_meta(ctx, "aggregate", hash_files(inputs)));

  if (!debug_path.empty()) {
    std::string lines;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (!domain_filter.empty() && dataset.entries()[i].domain != parse_domain(domain_filter)) continue;
      AggregationTrace trace;
      aggregate(dataset.load(i), ctx.config.aggregation, &trace);
      json scales = json::array();
      for (const auto& s : trace.scales) {
        scales.push_back({{"n", s.n}, {"weight", s.weight}, {"region_sum", s.region_sum}, {"weighted", s.weighted}});
      }
      lines += json{{"image_id", dataset.entries()[i].image_id}, {"scales", scales}, {"total", trace.total}}.dump() + "\n";
    }
    atomic_write(debug_path, lines);
  }
  ctx.out << "wrote " << set.size() << " descriptors to " << out_path.string() << "\n";
}

void cmd_align(Context& ctx, const fs::path& drone_path, const fs::path& sat_path,
               const fs::path& out_path, const std::string& dataset_name) {
  const DescriptorSet drone = read_descriptor_set(drone_path).filter(Domain::Drone);
  const DescriptorSet sat = read_descriptor_set(sat_path).filter(Domain::Satellite);
  AlignmentOptions options = ctx.config.alignment;
  options.dataset_name = dataset_name;
  const AlignmentModel model = fit_alignment(drone, sat, options);
  if (model.non_unique) {
    warn("cross-covariance is rank-deficient or has tied singular values; the rotation is not unique");
  }
  json meta = make_meta(ctx, "align", hash_files({drone_path, sat_path}));
  save_model(model, out_path, meta);
  ctx.out << "fitted alignment d=" << model.dim() << " D=" << model.input_dim() << " pairs=" << model.num_pairs
          << " -> " << out_path.string() << "\n";
}

void cmd_search(Context& ctx, const std::string& model_path, const fs::path& query_path,
                const fs::path& gallery_path, std::size_t k, const fs::path& out_path,
                const std::string& direction) {
  const Domain query_domain = direction == "s2d" ? Domain::Satellite : Domain::Drone;
  const DescriptorSet queries = read_descriptor_set(query_path).filter(query_domain);
  const DescriptorSet gallery = read_descriptor_set(gallery_path).filter(opposite(query_domain));
  if (queries.empty()) fail(ErrorKind::DataValidation, "no " + std::string(to_string(query_domain)) + " queries");
  if (gallery.empty()) fail(ErrorKind::DataValidation, "gallery is empty");

  std::optional<AlignmentModel> model;
  std::vector<fs::path> inputs{query_path, gallery_path};
  if (ctx.config.search_mode != SearchMode::Raw) {
    if (model_path == "-") fail(ErrorKind::BadArgument, "this search mode needs an alignment model");
    model = load_model(model_path);
    check_model_hash(*model, descriptor_set_hash(queries, gallery));
    inputs.emplace_back(model_path);
  }
  const AlignmentModel* m = model ? &*model : nullptr;
  const EmbeddingSet q = embed(queries, m, ctx.config.search_mode);
  const EmbeddingSet g = embed(gallery, m, ctx.config.search_mode);
  std::size_t depth = k > 0 ? k : ctx.config.search_depth;
  if (depth == 0) depth = gallery.size();
  const auto results = search(q, g, depth, ctx.threads);

  json meta = make_meta(ctx, "search", hash_files(inputs));
  meta["direction"] = direction;
  meta["gallery_size"] = gallery.size();
  atomic_write(out_path, results_to_jsonl(results, meta));
  ctx.out << "ranked " << results.size() << " queries against " << gallery.size() << " gallery items -> "
          << out_path.string() << "\n";
}

void cmd_evaluate(Context& ctx, const fs::path& results_path, const fs::path& manifest_path,
                  const std::vector<std::size_t>& ks, const fs::path& out_path) {
  const std::string text = read_file_text(results_path);
  const auto results = parse_results_jsonl(text);
  const Dataset dataset = load_dataset(manifest_path);
  const QuerySplit split = ground_truth_from_manifest(dataset, results);

  json config = ctx.config.snapshot();
  config["input_hash"] = hex64(hash_files({results_path, manifest_path}));
  const json results_meta = read_results_meta(text);
  if (!results_meta.is_null()) config["results_meta"] = results_meta;

  const EvalReport report = evaluate(results, split.truth, ks, split.gallery_size, config);
  const std::string table = format_table({{dataset.name(), &report}}, ks);
  atomic_write(out_path, report.to_json().dump(2) + "\n");
  atomic_write(with_suffix(out_path, ".txt"), table);
  if (ctx.json_output) {
    ctx.out << report.to_json().dump(2) << "\n";
  } else {
    ctx.out << table;
  }
}

void cmd_synth(Context& ctx, const std::string& spec_path, const fs::path& out_dir,
               std::optional<std::uint64_t> seed) {
  std::vector<fs::path> inputs;
  if (spec_path != "-") {
    ctx.config = load_config(spec_path);
    inputs.emplace_back(spec_path);
  }
  if (seed) {
    ctx.config.synth.seed = *seed;
    ctx.config.synth.validate();
  }
  const SynthBenchmark bench = generate(ctx.config.synth, ctx.threads);
  write_benchmark(bench, ctx.config.synth, out_dir, make_meta(ctx, "synth", hash_files(inputs)));
  ctx.out << "generated " << bench.drone.size() << " drone and " << bench.satellite.size()
          << " satellite descriptors in " << out_dir.string() << "\n";
}

void cmd_heatmap(Context& ctx, const fs::path& model_path, const fs::path& tensor_path,
                 const fs::path& sat_path, const std::string& sat_id, const fs::path& out_prefix) {
  const AlignmentModel model = load_model(model_path);
  FeatureMap drone = read_feature_map(tensor_path);
  drone.image_id = tensor_path.stem().string();
  drone.domain = Domain::Drone;

  const DescriptorSet sats = read_descriptor_set(sat_path);
  std::size_t index = 0;
  if (!sat_id.empty()) {
    auto found = sats.find(sat_id);
    if (!found) fail(ErrorKind::DataValidation, "satellite id '" + sat_id + "' not in " + sat_path.string());
    index = *found;
  } else if (sats.size() != 1) {
    fail(ErrorKind::BadArgument, "--sat-id is required when the descriptor set holds several entries");
  }
  const Heatmap heat = similarity_heatmap(drone, sats.items[index], model);

  std::vector<double> values = heat.values;
  std::uint32_t h = heat.height;
  std::uint32_t w = heat.width;
  if (ctx.config.heatmap_height > 0) {
    values = upsample_bilinear(values, h, w, ctx.config.heatmap_height, ctx.config.heatmap_width);
    h = ctx.config.heatmap_height;
    w = ctx.config.heatmap_width;
  }
  const std::vector<std::string> comments{
      "query " + heat.query_id, "gallery " + heat.gallery_id,
      "input_hash " + hex64(hash_files({model_path, tensor_path, sat_path})),
      "config " + ctx.config.snapshot().dump()};
  fs::path pgm = out_prefix;
  pgm += ".pgm";
  fs::path csv = out_prefix;
  csv += ".csv";
  atomic_write(pgm, heatmap_to_pgm(values, h, w, comments));
  atomic_write(csv, heatmap_to_csv(values, h, w, comments));
  ctx.out << "wrote " << w << "x" << h << " heatmap to " << pgm.string() << " and " << csv.string() << "\n";
}

void cmd_sweep_alpha(Context& ctx, const fs::path& manifest_path, const std::vector<double>& alphas,
                     const fs::path& out_path) {
  const Dataset dataset = load_dataset(manifest_path);
  dataset.require_both_domains();
  std::vector<fs::path> inputs{manifest_path};
  for (const auto& e : dataset.entries()) inputs.push_back(e.resolved_path);
  const std::string input_hash = hex64(hash_files(inputs));

  const auto sets = sweep_alpha(dataset, ctx.config.aggregation, alphas, ctx.threads);
  std::vector<EvalReport> d2s;
  std::vector<EvalReport> s2d;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    const DescriptorSet drone = sets[a].filter(Domain::Drone);
    const DescriptorSet sat = sets[a].filter(Domain::Satellite);
    AlignmentOptions options = ctx.config.alignment;
    options.dataset_name = dataset.name();
    const AlignmentModel model = fit_alignment(drone, sat, options);
    const EmbeddingSet ed = embed(drone, &model, ctx.config.search_mode);
    const EmbeddingSet es = embed(sat, &model, ctx.config.search_mode);

    json config = ctx.config.snapshot();
    config["aggregation"]["alpha"] = alphas[a];
    config["input_hash"] = input_hash;
    d2s.push_back(evaluate(search(ed, es, sat.size(), ctx.threads), ground_truth_from(drone, sat),
                           ctx.config.ks, sat.size(), config));
    s2d.push_back(evaluate(search(es, ed, drone.size(), ctx.threads), ground_truth_from(sat, drone),
                           ctx.config.ks, drone.size(), config));
  }

  std::vector<std::string> labels;
  json rows = json::array();
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", alphas[a]);
    labels.emplace_back(buf);
    rows.push_back({{"alpha", alphas[a]}, {"drone_to_satellite", d2s[a].to_json()},
                    {"satellite_to_drone", s2d[a].to_json()}});
  }
  std::vector<TableRow> d2s_rows;
  std::vector<TableRow> s2d_rows;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    d2s_rows.push_back({labels[a], &d2s[a]});
    s2d_rows.push_back({labels[a], &s2d[a]});
  }
  const std::string table = "Drone -> Satellite (alpha)\n" + format_table(d2s_rows, ctx.config.ks) +
                            "\nSatellite -> Drone (alpha)\n" + format_table(s2d_rows, ctx.config.ks);
  const json doc = {{"dataset_name", dataset.name()}, {"config", ctx.config.snapshot()},
                    {"input_hash", input_hash}, {"rows", rows}};
  atomic_write(out_path, doc.dump(2) + "\n");
  atomic_write(with_suffix(out_path, ".txt"), table);
  if (ctx.json_output) {
    ctx.out << doc.dump(2) << "\n";
  } else {
    ctx.out << table;
  }
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  std::replace(text.begin(), text.end(), '"', '\'');
  return text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Training-free cross-view geo-localization engine"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GlobalOptions global;
  app.add_option("--config", global.config_path, "Pipeline config file (TOML-style key = value)");
  app.add_option("--threads", global.threads, "Worker threads (default: hardware concurrency)");
  app.add_option("--seed", global.seed, "Override synth.seed");
  app.add_flag("--json", global.json_output, "Print JSON instead of tables");

  // aggregate
  std::string agg_manifest, agg_out, agg_domain, agg_debug;
  auto* agg = app.add_subcommand("aggregate", "Feature maps -> descriptor set");
  agg->add_option("manifest", agg_manifest, "Dataset manifest")->required();
  agg->add_option("-o,--out", agg_out, "Output descriptor set (.jsonl)")->required();
  agg->add_option("--domain", agg_domain, "Keep only drone or satellite entries");
  agg->add_option("--debug", agg_debug, "Write per-scale intermediate sums (.jsonl)");

  // align
  std::string al_drone, al_sat, al_out, al_name = "dataset";
  std::optional<std::size_t> al_dim;
  std::string al_pairing;
  auto* al = app.add_subcommand("align", "Fit domain-wise PCA + orthogonal Procrustes");
  al->add_option("drone_set", al_drone, "Drone descriptor set")->required();
  al->add_option("satellite_set", al_sat, "Satellite descriptor set")->required();
  al->add_option("-o,--out", al_out, "Output model (.cvam)")->required();
  al->add_option("--dim", al_dim, "PCA target dimension");
  al->add_option("--pairing", al_pairing, "given | mutual_nn");
  al->add_option("--name", al_name, "Dataset name recorded in the model");

  // search
  std::string se_model, se_query, se_gallery, se_out, se_mode, se_direction = "d2s";
  std::size_t se_k = 0;
  auto* se = app.add_subcommand("search", "Exact cosine top-K retrieval");
  se->add_option("model", se_model, "Alignment model ('-' for raw mode)")->required();
  se->add_option("query_set", se_query, "Query descriptor set")->required();
  se->add_option("gallery_set", se_gallery, "Gallery descriptor set")->required();
  se->add_option("-o,--out", se_out, "Output results (.jsonl)")->required();
  se->add_option("-k,--top-k", se_k, "Hits per query (default: whole gallery)");
  se->add_option("--mode", se_mode, "aligned | pca | raw");
  se->add_option("--direction", se_direction, "d2s (drone queries) or s2d")->check(CLI::IsMember({"d2s", "s2d"}));

  // evaluate
  std::string ev_results, ev_manifest, ev_out, ev_ks;
  auto* ev = app.add_subcommand("evaluate", "Recall@K, Recall@top1%, AP");
  ev->add_option("results", ev_results, "Results file (.jsonl)")->required();
  ev->add_option("manifest", ev_manifest, "Dataset manifest with location labels")->required();
  ev->add_option("-o,--out", ev_out, "Report (.json); a .txt table is written alongside")->required();
  ev->add_option("--ks", ev_ks, "Comma-separated K list (default from config)");

  // synth
  std::string sy_spec, sy_out;
  auto* sy = app.add_subcommand("synth", "Generate a synthetic benchmark");
  sy->add_option("spec_file", sy_spec, "Config file with a [synth] section ('-' for defaults)")->required();
  sy->add_option("out_dir", sy_out, "Output directory")->required();

  // heatmap
  std::string hm_model, hm_tensor, hm_sat, hm_sat_id, hm_out, hm_size;
  auto* hm = app.add_subcommand("heatmap", "Patch-level similarity heatmap");
  hm->add_option("model", hm_model, "Alignment model")->required();
  hm->add_option("drone_tensor", hm_tensor, "Drone feature map (.cvfm)")->required();
  hm->add_option("satellite_set", hm_sat, "Descriptor set holding the satellite descriptor")->required();
  hm->add_option("--sat-id", hm_sat_id, "Satellite image_id inside the set");
  hm->add_option("-o,--out", hm_out, "Output prefix (.pgm and .csv are appended)")->required();
  hm->add_option("--size", hm_size, "Upsample to HxW");

  // sweep-alpha
  std::string sw_manifest, sw_alphas = "1..9", sw_out;
  auto* sw = app.add_subcommand("sweep-alpha", "Decay-factor ablation table");
  sw->add_option("manifest", sw_manifest, "Dataset manifest")->required();
  sw->add_option("--alphas", sw_alphas, "Range lo..hi or comma list (default 1..9)");
  sw->add_option("-o,--out", sw_out, "Report (.json); a .txt table is written alongside")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error code=2 kind=bad_argument message=\"" << one_line(e.what()) << "\"\n";
    return static_cast<int>(ErrorKind::BadArgument);
  }

  auto previous_sink = set_warning_sink([&err](std::string_view msg) { err << "warning: " << msg << "\n"; });
  int code = 0;
  try {
    Context ctx{PipelineConfig{}, 1, global.json_output, out};
    if (!global.config_path.empty()) ctx.config = load_config(global.config_path);
    ctx.threads = global.threads > 0 ? global.threads : std::max(1u, std::thread::hardware_concurrency());

    if (*agg) {
      cmd_aggregate(ctx, agg_manifest, agg_out, agg_domain, agg_debug);
    } else if (*al) {
      if (al_dim) ctx.config.alignment.dim = static_cast<Eigen::Index>(*al_dim);
      if (!al_pairing.empty()) ctx.config.alignment.pairing = parse_pairing(al_pairing);
      cmd_align(ctx, al_drone, al_sat, al_out, al_name);
    } else if (*se) {
      if (!se_mode.empty()) ctx.config.search_mode = parse_search_mode(se_mode);
      cmd_search(ctx, se_model, se_query, se_gallery, se_k, se_out, se_direction);
    } else if (*ev) {
      cmd_evaluate(ctx, ev_results, ev_manifest, ev_ks.empty() ? ctx.config.ks : parse_ks(ev_ks), ev_out);
    } else if (*sy) {
      // The synth config file replaces --config for this command; --seed still wins.
      cmd_synth(ctx, sy_spec, sy_out, global.seed);
    } else if (*hm) {
      if (!hm_size.empty()) {
        const auto x = hm_size.find('x');
        std::uint32_t h = 0;
        std::uint32_t w = 0;
        if (x == std::string::npos ||
            std::from_chars(hm_size.data(), hm_size.data() + x, h).ec != std::errc() ||
            std::from_chars(hm_size.data() + x + 1, hm_size.data() + hm_size.size(), w).ec != std::errc() ||
            h == 0 || w == 0) {
          fail(ErrorKind::BadArgument, "--size expects HxW, e.g. 224x224");
        }
        ctx.config.heatmap_height = h;
        ctx.config.heatmap_width = w;
      }
      cmd_heatmap(ctx, hm_model, hm_tensor, hm_sat, hm_sat_id, hm_out);
    } else if (*sw) {
      cmd_sweep_alpha(ctx, sw_manifest, parse_alphas(sw_alphas), sw_out);
    }
  } catch (const Error& e) {
    err << "error code=" << static_cast<int>(e.kind()) << " kind=" << to_string(e.kind()) << " message=\""
        << one_line(e.what()) << "\"\n";
    code = static_cast<int>(e.kind());
  } catch (const std::bad_alloc&) {
    err << "error code=4 kind=numerical message=\"out of memory\"\n";
    code = static_cast<int>(ErrorKind::Numerical);
  } catch (const std::exception& e) {
    err << "error code=3 kind=data_validation message=\"" << one_line(e.what()) << "\"\n";
    code = static_cast<int>(ErrorKind::DataValidation);
  }
  set_warning_sink(std::move(previous_sink));
  return code;
}

}  // namespace xview::cli
