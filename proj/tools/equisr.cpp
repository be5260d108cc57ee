// equisr command-line front end.
//
// Exit codes: 0 success, 1 usage or configuration, 2 file I/O,
// 3 data or checkpoint content, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "equisr/equisr.hpp"

namespace fs = std::filesystem;
using namespace equisr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kData = 3, kNumeric = 4 };

RunConfig config_or_defaults(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

int cmd_print_defaults(const std::string& out) {
  const std::string text = to_json(RunConfig{}).dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_file_atomic(out, text);
  return kOk;
}

int cmd_gen_data(const std::string& config, const fs::path& out) {
  const auto cfg = config_or_defaults(config);
  if (cfg.data.kind == DataKind::file_dir) throw ConfigError("gen-data needs a synthetic data.kind");
  ensure_dir(out);
  const char* ext = cfg.data.channels == 3 ? ".ppm" : ".pgm";
  std::string manifest = version_comment() + "index,file,kind,seed,size\n";
  for (std::size_t i = 0; i < cfg.data.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "item_%05zu%s", i, ext);
    write_image(out / name, gen_synthetic(cfg.data, i));
    manifest += std::to_string(i) + "," + name + "," + to_string(cfg.data.kind) + "," + std::to_string(cfg.data.seed) +
                "," + std::to_string(cfg.data.size) + "\n";
  }
  write_file_atomic(out / "manifest.csv", manifest);
  std::cout << "wrote " << cfg.data.count << " images to " << out.string() << "\n";
  return kOk;
}

// Linearly scaled 8-bit maps plus a sidecar CSV recording each map's scale.
void write_error_maps(const fs::path& dir, const std::vector<SweepRow>& rows, const std::vector<std::uint64_t>& seeds) {
  ensure_dir(dir);
  std::string side = version_comment() + "file,model,variant,t,angle_rad,scale,resolution,seed,max_abs_error\n";
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t k = 0; k < rows[r].error_maps.size(); ++k) {
      Image map = rows[r].error_maps[k];
      double peak = 0.0;
      for (double v : map.data) peak = std::max(peak, v);
      if (peak > 0.0)
        for (auto& v : map.data) v /= peak;
      char name[48];
      std::snprintf(name, sizeof name, "case%03zu_seed%llu.pgm", r, static_cast<unsigned long long>(seeds[k]));
      write_image(dir / name, map);
      const auto& row = rows[r];
      side += std::string(name) + "," + row.model + "," + to_string(row.variant) + "," + std::to_string(row.t) + "," +
              format_number(row.angle) + "," + format_number(row.scale) + "," + std::to_string(row.resolution) + "," +
              std::to_string(seeds[k]) + "," + format_number(peak) + "\n";
    }
  write_file_atomic(dir / "error_maps.csv", side);
}

int cmd_eval_equiv(const std::string& config, const std::string& ckpt, const fs::path& out, const std::string& maps) {
  const auto cfg = config_or_defaults(config);
  const SweepSpec spec = sweep_spec(cfg);
  std::vector<SweepRow> rows;
  if (ckpt.empty()) {
    rows = sweep(spec, cfg.model.inr.eps, !maps.empty());
  } else {
    const auto ck = load_checkpoint(ckpt);
    const INRModel model(ck.config);
    rows = sweep_fixed(model, ck.params, spec, ck.config.inr.eps, !maps.empty());
  }
  write_file_atomic(out, sweep_csv(rows));
  if (!maps.empty()) write_error_maps(maps, rows, spec.seeds);
  std::cout << "wrote " << rows.size() << " rows to " << out.string() << "\n";
  return kOk;
}

int cmd_train(const std::string& config, const fs::path& out) {
  const auto cfg = config_or_defaults(config);
  ensure_dir(out);
  const auto result = train(cfg.model, cfg.data, cfg.train);
  save_checkpoint(out / "model.json", Checkpoint{cfg.model, result.params});
  write_file_atomic(out / "loss.csv", loss_log_csv(result));
  const std::size_t w = cfg.train.smooth, last = result.losses.size() - 1;
  std::cout << "smoothed loss " << smoothed(result.losses, std::min(w - 1, last), w) << " -> "
            << smoothed(result.losses, last, w) << "; checkpoint " << (out / "model.json").string() << "\n";
  return kOk;
}

int cmd_sr(const std::string& ckpt, const std::string& in, double scale, const std::string& out, const std::string& mode) {
  const auto ck = load_checkpoint(ckpt);
  const INRModel model(ck.config);
  const Image img = read_image(in);
  SrOptions opt{ck.config.inr.mode, ck.config.inr.eps};
  if (!mode.empty()) opt.mode = eval_mode_from_string(mode);
  const Image y = super_resolve(model, ck.params, img, scale, opt);
  write_image(out, y);
  std::cout << img.h << "x" << img.w << " -> " << y.h << "x" << y.w << "\n";
  return kOk;
}

int cmd_gradcheck(const std::string& module, std::size_t seeds, double tol) {
  std::vector<std::string> modules = module.empty() ? gradient_modules() : std::vector<std::string>{module};
  std::size_t failed = 0, total = 0;
  for (const auto& m : modules)
    for (std::uint64_t s = 1; s <= seeds; ++s)
      for (const auto& c : run_gradient_suite(m, s)) {
        ++total;
        const bool ok = c.passed(tol);
        failed += !ok;
        std::printf("%-4s %-8s %-28s seed %llu  rel.err %.3e  (%zu checked, %zu skipped)\n", ok ? "ok" : "FAIL",
                    c.module.c_str(), c.name.c_str(), static_cast<unsigned long long>(s), c.report.max_rel_error,
                    c.report.checked, c.report.skipped);
      }
  std::printf("%zu/%zu gradient checks passed (tolerance %.0e)\n", total - failed, total, tol);
  return failed ? kNumeric : kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Rotation-equivariant arbitrary-scale super-resolution"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config, out, ckpt, maps, in, module, mode;
  double scale = 2.0, tol = 1e-4;
  std::size_t seeds = 3;

  auto* defaults = app.add_subcommand("print-defaults", "Print the default configuration (defaults.json)");
  defaults->add_option("--out", out, "Write to this file instead of stdout");

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic corpus as PPM/PGM files plus manifest.csv");
  gen->add_option("--config", config, "JSON run configuration (defaults when omitted)");
  gen->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval-equiv", "Equivariance error sweep to CSV");
  eval->add_option("--config", config, "JSON run configuration (defaults when omitted)");
  eval->add_option("--ckpt", ckpt, "Checkpoint manifest; random initialization when omitted");
  eval->add_option("--out", out, "Output CSV")->required();
  eval->add_option("--error-maps", maps, "Directory for per-case PGM error maps and their scales");

  auto* tr = app.add_subcommand("train", "Train with L1 loss and Adam, then write a checkpoint and loss log");
  tr->add_option("--config", config, "JSON run configuration (defaults when omitted)");
  tr->add_option("--out", out, "Output directory (model.json, model.bin, loss.csv)")->required();

  auto* sr = app.add_subcommand("sr", "Super-resolve one PPM/PGM image");
  sr->add_option("--ckpt", ckpt, "Checkpoint manifest")->required();
  sr->add_option("--in", in, "Input PPM/PGM")->required();
  sr->add_option("--scale", scale, "Real upscale factor >= 1")->required();
  sr->add_option("--out", out, "Output PPM/PGM")->required();
  sr->add_option("--mode", mode, "ensemble or nearest (checkpoint setting when omitted)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and layer");
  gc->add_option("--module", module, "autodiff, filter, encoder or inr (all when omitted)");
  gc->add_option("--seeds", seeds, "Seeds per module")->check(CLI::PositiveNumber);
  gc->add_option("--tol", tol, "Relative error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  if (*defaults) return cmd_print_defaults(out);
  if (*gen) return cmd_gen_data(config, out);
  if (*eval) return cmd_eval_equiv(config, ckpt, out, maps);
  if (*tr) return cmd_train(config, out);
  if (*sr) return cmd_sr(ckpt, in, scale, out, mode);
  if (*gc) return cmd_gradcheck(module, seeds, tol);
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DomainError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const EvaluationError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const UndefinedMetricError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
