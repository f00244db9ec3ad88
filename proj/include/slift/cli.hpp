#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "checkpoint.hpp"
#include "config.hpp"
#include "costmodel.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "gradcheck.hpp"
#include "metrics.hpp"
#include "synth.hpp"
#include "train.hpp"

namespace slift::cli {

using json = nlohmann::json;

inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;
inline constexpr int kNumeric = 2;

namespace detail {

inline void emit(std::ostream& out, const json& rec) { out << rec.dump() << '\n' << std::flush; }

// --seed wins; otherwise SL_SEED; otherwise `fallback`.
inline std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value, std::uint64_t fallback) {
  if (opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("SL_SEED"); env && *env) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError("SL_SEED must be a non-negative integer, got '" + std::string(env) + "'");
    return v;
  }
  return fallback;
}

inline Geometry parse_geometry(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t p1 = 0, p2 = 0;
    const auto h = std::stoull(s.substr(0, x), &p1);
    const auto w = std::stoull(s.substr(x + 1), &p2);
    if (p1 != x || p2 != s.size() - x - 1 || h == 0 || w == 0) throw std::invalid_argument(s);
    return {static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
  } catch (const std::logic_error&) {
    throw ConfigError("geometry must look like HxW, got '" + s + "'");
  }
}

inline json slice_stats_json(const SliceStats& st) {
  return {{"per_slice_loss", st.per_slice_loss}, {"selected", st.selected}, {"s", st.s}};
}

inline void print_cost_table(std::ostream& out, const std::string& title, const CostReport& r) {
  out << title << " (" << r.height << "x" << r.width << ", depth " << r.depth << ")\n";
  out << std::left << std::setw(22) << "layer" << std::setw(7) << "kind" << std::right << std::setw(14) << "params"
      << std::setw(18) << "macs" << '\n';
  for (const auto& row : r.rows)
    out << std::left << std::setw(22) << row.name << std::setw(7) << row.kind << std::right << std::setw(14)
        << row.params << std::setw(18) << row.macs << '\n';
  out << std::left << std::setw(29) << "total" << std::right << std::setw(14) << r.total_params << std::setw(18)
      << r.total_macs << "\n\n";
}

inline void emit_cost(std::ostream& out, const std::string& model, const CostReport& r) {
  for (const auto& row : r.rows)
    emit(out, {{"event", "layer"}, {"model", model}, {"name", row.name}, {"kind", row.kind}, {"params", row.params},
               {"macs", row.macs}});
  emit(out, {{"event", "total"}, {"model", model}, {"params", r.total_params}, {"macs", r.total_macs},
             {"geometry", {r.height, r.width}}, {"depth", r.depth}});
}

}  // namespace detail

// Runs one CLI invocation. `args` excludes the program name. Structured
// records go to `out`, diagnostics and usage to `err`.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Spatial lifting toolkit: data generation, training, inference, quality scoring, cost model", "slift"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  std::string gen_task = "segmentation", gen_family = "mixed", gen_out, gen_corruption;
  long long gen_n = 10;
  std::size_t gen_size = 64;
  std::uint64_t gen_seed = 0;
  int gen_severity = 0;
  gen->add_option("--task", gen_task, "segmentation | depth")->capture_default_str();
  gen->add_option("--n", gen_n, "Number of samples")->capture_default_str();
  gen->add_option("--size", gen_size, "Image side length")->capture_default_str();
  gen->add_option("--shape-family", gen_family, "ellipse | rectangle | ring | mixed")->capture_default_str();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--corruption", gen_corruption, "Corrupt every image: gaussian_noise | blur | occlusion");
  gen->add_option("--severity", gen_severity, "Corruption severity 1..5");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train a lifted network with dense slice supervision");
  std::string tr_config, tr_data, tr_out;
  std::uint64_t tr_seed = 0;
  std::size_t tr_epochs = 0;
  tr->add_option("--config", tr_config, "Run configuration JSON {arch, train}");
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--out", tr_out, "Checkpoint path")->required();
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "Training seed");
  auto* tr_epochs_opt = tr->add_option("--epochs", tr_epochs, "Override the configured epoch count");

  // infer
  auto* inf = app.add_subcommand("infer", "Fuse selected slices and write predictions");
  std::string inf_ck, inf_data, inf_out;
  inf->add_option("--checkpoint", inf_ck, "Checkpoint path")->required();
  inf->add_option("--data", inf_data, "Dataset directory")->required();
  inf->add_option("--out", inf_out, "Output directory")->required();

  // pqa
  auto* pq = app.add_subcommand("pqa", "Score predictions by inter-slice agreement");
  std::string pq_ck, pq_data;
  std::size_t pq_perms = 10000;
  std::uint64_t pq_seed = 0;
  pq->add_option("--checkpoint", pq_ck, "Checkpoint path")->required();
  pq->add_option("--data", pq_data, "Dataset directory")->required();
  pq->add_option("--permutations", pq_perms, "Permutations for the Spearman p-value")->capture_default_str();
  auto* pq_seed_opt = pq->add_option("--seed", pq_seed, "Permutation seed");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate fused predictions against targets");
  std::string ev_ck, ev_data;
  ev->add_option("--checkpoint", ev_ck, "Checkpoint path")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();

  // costmodel
  auto* cm = app.add_subcommand("costmodel", "Analytic parameter and MAC counts");
  std::string cm_spec, cm_baseline, cm_geometry;
  bool cm_json = false;
  cm->add_option("--spec", cm_spec, "Architecture JSON")->required();
  cm->add_option("--baseline", cm_baseline, "Architecture JSON to compare against (default: matching 2-D U-Net)");
  cm->add_option("--geometry", cm_geometry, "Input geometry HxW")->required();
  cm->add_flag("--json", cm_json, "Emit line-delimited records instead of a table");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of a tiny lifted network (f64)");
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  auto* gc_seed_opt = gc->add_option("--seed", gc_seed, "Seed for weights and data");
  gc->add_option("--tolerance", gc_tol, "Maximum relative error")->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kValidation;
  }

  try {
    if (*gen) {
      if (gen_n <= 0) throw ConfigError("gen-data: --n must be > 0");
      const auto seed = detail::resolve_seed(gen_seed_opt, gen_seed, 0);
      Dataset ds;
      const auto task = parse_task(gen_task);
      if (task == Task::segmentation)
        ds = gen_segmentation({seed, static_cast<std::size_t>(gen_n), gen_size, gen_family});
      else
        ds = gen_depth({seed, static_cast<std::size_t>(gen_n), gen_size});
      if (!gen_corruption.empty() || gen_severity != 0) {
        if (gen_corruption.empty()) throw ConfigError("gen-data: --severity needs --corruption");
        const auto kind = parse_corruption(gen_corruption);
        if (gen_severity < 1 || gen_severity > 5) throw ConfigError("gen-data: --severity must be in 1..5");
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
          ds.samples[i].image = corrupt(ds.samples[i].image, kind, gen_severity, derive_seed(seed, 0xc0, i));
        ds.generator["corruption"] = gen_corruption;
        ds.generator["severity"] = gen_severity;
      }
      write_dataset(gen_out, ds);
      detail::emit(out, {{"event", "dataset"}, {"path", gen_out}, {"task", gen_task}, {"n", ds.samples.size()},
                         {"generator", ds.generator}});
      return kOk;
    }

    if (*tr) {
      RunConfig rc;
      json cj = json::object();
      if (!tr_config.empty()) {
        cj = parse_json_file(tr_config);
        rc = run_config_from_json(cj);
      }
      const bool config_seed = cj.contains("train") && cj["train"].contains("seed");
      // --seed, then the config file, then SL_SEED.
      if (tr_seed_opt->count() > 0 || !config_seed) rc.train.seed = detail::resolve_seed(tr_seed_opt, tr_seed, 0);
      if (tr_epochs_opt->count() > 0) rc.train.epochs = tr_epochs;
      const auto ds = read_dataset(tr_data);
      TrainHooks hooks;
      hooks.on_epoch = [&](const EpochRecord& r, const Network<float>&) {
        detail::emit(out, {{"event", "epoch"}, {"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"lr", r.lr},
                           {"per_slice_loss", r.per_slice}});
      };
      const auto ck = train(ds, rc.arch, rc.train, hooks);
      const auto bytes = encode_checkpoint(ck);
      write_file_atomic(tr_out, bytes);
      detail::emit(out, {{"event", "checkpoint"}, {"path", tr_out}, {"digest", digest_hex(bytes)},
                         {"seed", rc.train.seed}, {"slice_stats", detail::slice_stats_json(ck.stats)}});
      return kOk;
    }

    if (*inf) {
      const auto ck = load_checkpoint(inf_ck);
      const auto ds = read_dataset(inf_data);
      check_task_compat(ds, ck.arch, ck.train.loss);
      std::filesystem::create_directories(inf_out);
      for (const auto& s : ds.samples) {
        const auto p = predict(ck, s.image);
        json rec = {{"event", "prediction"}, {"id", s.id}, {"output", "pred_" + s.id + ".slt"}};
        write_tensor(std::filesystem::path(inf_out) / ("pred_" + s.id + ".slt"), p.fused);
        if (ck.arch.head == Head::segmentation) {
          write_tensor(std::filesystem::path(inf_out) / ("labels_" + s.id + ".slt"), decode_segmentation(p.fused));
          rec["labels"] = "labels_" + s.id + ".slt";
        }
        detail::emit(out, rec);
      }
      return kOk;
    }

    if (*pq) {
      const auto ck = load_checkpoint(pq_ck);
      const auto ds = read_dataset(pq_data);
      check_task_compat(ds, ck.arch, ck.train.loss);
      if (ck.arch.head != Head::segmentation) throw ConfigError("pqa: needs a segmentation checkpoint");
      std::vector<double> qs, ds_dice;
      for (const auto& s : ds.samples) {
        const auto p = predict(ck, s.image);
        const auto rep = pqa_score(p.logits, ck.stats);
        const double d = segmentation_dice(p.fused, s.target);
        qs.push_back(rep.q);
        ds_dice.push_back(d);
        detail::emit(out, {{"event", "pqa"}, {"id", s.id}, {"q", rep.q}, {"dice", d}});
      }
      const auto seed = detail::resolve_seed(pq_seed_opt, pq_seed, 0);
      const auto c = correlations(qs, ds_dice, pq_perms, seed);
      detail::emit(out, {{"event", "correlation"}, {"n", c.n}, {"pearson_r", c.pearson_r},
                         {"spearman_rho", c.spearman_rho}, {"p_value", c.p_value}, {"permutations", c.permutations},
                         {"seed", seed}});
      return kOk;
    }

    if (*ev) {
      const auto ck = load_checkpoint(ev_ck);
      const auto ds = read_dataset(ev_data);
      check_task_compat(ds, ck.arch, ck.train.loss);
      if (ck.arch.head == Head::segmentation) {
        double acc = 0;
        for (const auto& s : ds.samples) {
          const double d = segmentation_dice(predict(ck, s.image).fused, s.target);
          acc += d;
          detail::emit(out, {{"event", "eval"}, {"id", s.id}, {"dice", d}});
        }
        detail::emit(out, {{"event", "summary"}, {"n", ds.samples.size()},
                           {"mean_dice", acc / static_cast<double>(ds.samples.size())}});
      } else {
        for (const auto& s : ds.samples) {
          const auto f = predict(ck, s.image).fused;
          const auto m = depth_metrics(f, s.target, s.valid.empty() ? Tensor<float>(s.target.dims(), 1.0f) : s.valid);
          detail::emit(out, {{"event", "eval"}, {"id", s.id}, {"rmse", m.rmse}, {"delta1", m.delta1}});
        }
        const auto m = dataset_depth_metrics(ck.net, ck.stats, ds);
        detail::emit(out, {{"event", "summary"}, {"n", ds.samples.size()}, {"rmse", m.rmse}, {"delta1", m.delta1},
                           {"valid_pixels", m.valid}});
      }
      return kOk;
    }

    if (*cm) {
      const auto spec = arch_from_file(cm_spec);
      const auto base = cm_baseline.empty()
                            ? baseline_unet(spec.levels, spec.res_units, spec.in_channels, spec.out_channels)
                            : arch_from_file(cm_baseline);
      const auto geo = detail::parse_geometry(cm_geometry);
      const auto c = compare(base, spec, geo);
      if (cm_json) {
        detail::emit_cost(out, "baseline", c.a);
        detail::emit_cost(out, "spec", c.b);
      } else {
        detail::print_cost_table(out, "baseline", c.a);
        detail::print_cost_table(out, "spec", c.b);
        out << "param ratio spec/baseline " << c.param_ratio << "\nmac ratio spec/baseline   " << c.mac_ratio << "\n";
      }
      if (cm_json)
        detail::emit(out, {{"event", "compare"}, {"param_ratio", c.param_ratio}, {"mac_ratio", c.mac_ratio},
                           {"baseline_params", c.a.total_params}, {"spec_params", c.b.total_params},
                           {"baseline_macs", c.a.total_macs}, {"spec_macs", c.b.total_macs}});
      return kOk;
    }

    if (*gc) {
      const auto seed = detail::resolve_seed(gc_seed_opt, gc_seed, 0);
      const auto r = gradcheck_network(seed);
      const bool pass = r.report.max_rel_error < gc_tol;
      detail::emit(out, {{"event", "gradcheck"}, {"parameters", r.parameters}, {"checked", r.report.checked},
                         {"skipped", r.report.skipped}, {"max_rel_error", r.report.max_rel_error},
                         {"worst", r.report.worst}, {"tolerance", gc_tol}, {"pass", pass}});
      return pass ? kOk : kNumeric;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.numeric() ? kNumeric : kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace slift::cli
