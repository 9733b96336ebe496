// eskin: dataset generation, training, reconstruction and evaluation.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "eskin/binary_io.hpp"
#include "eskin/config.hpp"
#include "eskin/dataset.hpp"
#include "eskin/error.hpp"
#include "eskin/forward.hpp"
#include "eskin/image.hpp"
#include "eskin/metrics.hpp"
#include "eskin/pointcloud.hpp"
#include "eskin/recon.hpp"
#include "eskin/vd2t.hpp"

namespace fs = std::filesystem;
using namespace eskin;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

// config file < ESKIN_OUT_DIR < flags.
RunConfig resolve(const Globals& g, const std::string& command) {
  RunConfig c = load_run_config(g.config_path, g.overrides);
  if (const char* env = std::getenv(kOutDirEnv); env && *env) c.paths.out_dir = env;
  if (!g.out_dir.empty()) c.paths.out_dir = g.out_dir;
  fs::create_directories(c.paths.out_dir);
  const std::string log = (fs::path(c.paths.out_dir) / (command + ".config.json")).string();
  std::ofstream(log) << to_json(c) << "\n";
  std::cerr << "resolved config: " << log << "\n";
  return c;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw MissingInput(what + " not found: " + path);
}

std::string bend_tag(double theta) {
  char s[32];
  std::snprintf(s, sizeof s, "bend_%.6f", theta);
  return s;
}

DeformationState state_for(const RunConfig& c, double theta) {
  DeformationState d;
  d.bend_angle = theta;
  d.axis = c.dataset.axis;
  return d;
}

// Cached on disk under paths.jacobians, keyed by bend angle.
Jacobian jacobian_for(const RunConfig& c, double theta, bool verbose = true) {
  const std::string dir = c.paths.resolve(c.paths.jacobians);
  fs::create_directories(dir);
  const std::string path = (fs::path(dir) / (bend_tag(theta) + ".jac")).string();
  const DeformationState d = state_for(c, theta);
  const Mesh mesh = make_mesh(c.geometry, d, c.solver.jacobian_vertices);
  if (fs::exists(path)) {
    Jacobian j = read_jacobian(path);
    if (j.mesh_id == mesh.id) return j;
    if (verbose) std::cerr << "stale Jacobian " << path << ", recomputing\n";
  }
  const auto t0 = std::chrono::steady_clock::now();
  const Jacobian j = compute_jacobian(mesh, ConductivityField::uniform(Lattice{}, 1.0),
                                      make_adjacent_protocol(c.geometry.electrode_count),
                                      make_recon_grid(c.geometry, d), c.dataset.current_mA);
  write_jacobian(path, j);
  if (verbose)
    std::cout << "jacobian " << path << " (" << j.rows() << "x" << j.cols() << ", "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s)\n";
  return j;
}

void write_outputs(const std::string& dir, const std::string& id, const TactileMap& map, ColorScale scale,
                   int upscale) {
  fs::create_directories(dir);
  const std::string base = (fs::path(dir) / id).string();
  write_map_csv(base + ".csv", map);
  write_ppm(base + ".ppm", render_heat_map(map, scale, upscale));
}

void print_metrics(const std::string& id, const std::string& method, const TactileMap& map,
                   const Eigen::VectorXd& truth) {
  const MetricReport r = evaluate(id, method, map.delta_sigma, truth);
  std::printf("%-4s %-14s cc %.4f  psnr %s  rie %.4f\n", id.c_str(), method.c_str(), r.cc,
              r.psnr.infinite ? "inf" : std::to_string(r.psnr.db).c_str(), r.rie);
}

// ------------------------------------------------------------------ gen

int cmd_gen(const Globals& g) {
  const RunConfig c = resolve(g, "gen");
  const std::string dir = c.paths.resolve(c.paths.dataset);
  const auto t0 = std::chrono::steady_clock::now();
  const Manifest m = generate(c.dataset, c.geometry, dir, [](const std::string& s) { std::cout << s << "\n"; });
  const std::string manifest = (fs::path(dir) / "manifest.json").string();
  std::cout << "samples " << m.total_samples << " in " << m.shards.size() << " shards, skipped " << m.skipped.size()
            << "\nmanifest " << manifest << " hash " << hex64(hash_file(manifest)) << "\n"
            << "elapsed " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
  return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const Globals& g) {
  const RunConfig c = resolve(g, "train");
  const std::string dir = c.paths.resolve(c.paths.dataset);
  require_file((fs::path(dir) / "manifest.json").string(), "dataset manifest");
  const LoadedDataset ds = load_dataset(dir);
  std::cout << "dataset " << ds.data.size() << " samples\n";
  Vd2tModel model(c.model);
  std::cout << "parameters " << model.parameter_count() << "\n";
  const auto t0 = std::chrono::steady_clock::now();
  const TrainReport r = train(model, ds.data, [&](int e, double tl, double vl) {
    std::printf("epoch %4d  train %.6f  val %.6f  %.0f s\n", e, tl, vl,
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::fflush(stdout);
  });
  const std::string ckpt = c.paths.resolve(c.paths.checkpoint);
  const std::string csv = c.paths.resolve(c.paths.loss_csv);
  fs::create_directories(fs::path(ckpt).parent_path());
  write_checkpoint(ckpt, model, {r.best_epoch, r.best_val_loss});
  write_loss_csv(csv, r);
  std::cout << "best epoch " << r.best_epoch << " val " << r.best_val_loss << "\ncheckpoint " << ckpt << " hash "
            << hex64(hash_file(ckpt)) << "\nloss curve " << csv << "\n";
  return 0;
}

// ------------------------------------------------------------- jacobian

int cmd_jacobian(const Globals& g, std::vector<double> bends, bool phantom_bends) {
  const RunConfig c = resolve(g, "jacobian");
  if (phantom_bends)
    for (const auto& p : held_out_phantoms()) bends.push_back(p.bend_angle);
  if (bends.empty()) bends = c.dataset.bends;
  std::sort(bends.begin(), bends.end());
  bends.erase(std::unique(bends.begin(), bends.end()), bends.end());
  for (double b : bends) jacobian_for(c, b);
  return 0;
}

// ---------------------------------------------------------------- recon

struct ReconArgs {
  std::string method = "all";
  std::string phantom;
  std::string reference;  // "", flat, deformed
  std::string touched_csv, reference_csv, descriptor, checkpoint, truth_csv, name = "input";
  double bend = 0.0;
  int upscale = 8;
};

std::vector<std::string> methods_of(const std::string& m) {
  if (m == "all") return {"tikhonov", "l1", "sbl", "vd2t"};
  if (m != "vd2t") recon_method_from_string(m);
  return {m};
}

FrameKind reference_kind(const ReconArgs& a, const std::string& method) {
  if (a.reference.empty()) return method == "vd2t" ? FrameKind::kReferenceFlat : FrameKind::kReferenceDeformed;
  if (a.reference == "flat") return FrameKind::kReferenceFlat;
  if (a.reference == "deformed") return FrameKind::kReferenceDeformed;
  throw ConfigError("--reference must be 'flat' or 'deformed'");
}

// Result directory per method; flat-reference classical runs go apart so
// both can be evaluated side by side.
std::string result_dir(const RunConfig& c, const std::string& method, FrameKind ref) {
  const bool mismatch = method != "vd2t" && ref == FrameKind::kReferenceFlat;
  return (fs::path(c.paths.resolve(c.paths.results)) / (mismatch ? method + "-flatref" : method)).string();
}

int cmd_recon(const Globals& g, const ReconArgs& a) {
  const RunConfig c = resolve(g, "recon");
  const auto methods = methods_of(a.method);
  for (const auto& m : methods)
    if (m == "vd2t" && reference_kind(a, m) != FrameKind::kReferenceFlat)
      throw ConfigError("VD2T requires the flat reference");

  std::unique_ptr<Vd2tModel> model;
  auto load_model = [&]() -> Vd2tModel& {
    if (!model) {
      const std::string ckpt = a.checkpoint.empty() ? c.paths.resolve(c.paths.checkpoint) : a.checkpoint;
      require_file(ckpt, "checkpoint");
      model = read_checkpoint(ckpt);
    }
    return *model;
  };
  const Lattice lattice;

  auto run = [&](const std::string& id, const std::string& method, const MeasurementFrame& touched,
                 const MeasurementFrame& reference, double bend, const DeformationDescriptor* desc,
                 const Eigen::VectorXd* truth) {
    TactileMap map;
    if (method == "vd2t") {
      if (!desc) throw MissingInput("vd2t needs a deformation descriptor (--descriptor)");
      map = predict_map(load_model(), touched, reference, *desc, lattice);
    } else {
      const Jacobian j = jacobian_for(c, bend);
      const Mesh coarse = make_mesh(c.geometry, state_for(c, bend), c.solver.jacobian_vertices);
      map = reconstruct(touched, reference, j, lattice, c.solver.params(recon_method_from_string(method)), coarse.id);
    }
    write_outputs(result_dir(c, method, reference.kind), id, map,
                  method == "vd2t" ? ColorScale::kUnit : ColorScale::kSymmetric, a.upscale);
    if (truth) print_metrics(id, method + (reference.kind == FrameKind::kReferenceFlat && method != "vd2t" ? "-flatref" : ""),
                             map, *truth);
  };

  if (!a.phantom.empty()) {
    const auto all = held_out_phantoms();
    const std::string truth_dir = (fs::path(c.paths.resolve(c.paths.results)) / "truth").string();
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (a.phantom != "all" && a.phantom != all[i].id) continue;
      const PhantomCase pc = simulate_phantom(c.geometry, all[i], static_cast<int>(i), c.dataset);
      write_outputs(truth_dir, pc.phantom.id, {lattice, pc.truth}, ColorScale::kUnit, a.upscale);
      for (const auto& m : methods) {
        const FrameKind k = reference_kind(a, m);
        run(pc.phantom.id, m, pc.touched, k == FrameKind::kReferenceFlat ? pc.reference_flat : pc.reference_deformed,
            pc.state.bend_angle, &pc.descriptor, &pc.truth);
      }
      if (a.phantom != "all") return 0;
    }
    if (a.phantom != "all") throw ConfigError("unknown phantom '" + a.phantom + "'");
    return 0;
  }

  if (a.touched_csv.empty() || a.reference_csv.empty())
    throw ConfigError("recon needs --phantom, or --touched and --reference frame files");
  require_file(a.touched_csv, "touched frame");
  require_file(a.reference_csv, "reference frame");
  const SensingProtocol p = make_adjacent_protocol(c.geometry.electrode_count);
  std::optional<DeformationDescriptor> desc;
  if (!a.descriptor.empty()) {
    require_file(a.descriptor, "descriptor");
    desc = read_descriptor(a.descriptor);
  }
  std::optional<Eigen::VectorXd> truth;
  if (!a.truth_csv.empty()) {
    require_file(a.truth_csv, "truth map");
    truth = read_map_csv(a.truth_csv, lattice).delta_sigma;
  }
  for (const auto& m : methods) {
    const auto touched = read_frames_csv(a.touched_csv, p, FrameKind::kTouched);
    const auto reference = read_frames_csv(a.reference_csv, p, reference_kind(a, m));
    if (touched.empty() || reference.empty()) throw MissingInput("frame file holds no frames");
    run(a.name, m, touched.front(), reference.front(), a.bend, desc ? &*desc : nullptr, truth ? &*truth : nullptr);
  }
  return 0;
}

// ----------------------------------------------------------------- eval

int cmd_eval(const Globals& g, std::string results, std::string truth, std::string out) {
  const RunConfig c = resolve(g, "eval");
  if (results.empty()) results = c.paths.resolve(c.paths.results);
  if (truth.empty()) truth = (fs::path(results) / "truth").string();
  if (out.empty()) out = (fs::path(results) / "table.csv").string();
  require_file(truth, "truth directory");
  const Lattice lattice;

  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(truth))
    if (e.path().extension() == ".csv") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw MissingInput("no truth maps in " + truth);

  std::vector<std::string> methods = {"tikhonov", "l1", "sbl", "vd2t"};
  std::vector<std::string> extra;
  if (fs::exists(results))
    for (const auto& e : fs::directory_iterator(results))
      if (e.is_directory()) {
        const auto name = e.path().filename().string();
        if (name != "truth" && std::find(methods.begin(), methods.end(), name) == methods.end()) extra.push_back(name);
      }
  std::sort(extra.begin(), extra.end());
  methods.insert(methods.end(), extra.begin(), extra.end());

  std::set<std::string> known(ids.begin(), ids.end());
  for (const auto& m : methods) {
    const fs::path dir = fs::path(results) / m;
    if (!fs::exists(dir)) continue;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".csv" && !known.count(e.path().stem().string()))
        std::cerr << "warning: " << m << "/" << e.path().filename().string() << " has no truth map\n";
  }

  std::vector<MetricReport> rows;
  for (const auto& id : ids) {
    const Eigen::VectorXd t = read_map_csv((fs::path(truth) / (id + ".csv")).string(), lattice).delta_sigma;
    for (const auto& m : methods) {
      const fs::path f = fs::path(results) / m / (id + ".csv");
      if (!fs::exists(f)) {
        std::cerr << "warning: no " << m << " result for " << id << "\n";
        continue;
      }
      rows.push_back(evaluate(id, m, read_map_csv(f.string(), lattice).delta_sigma, t));
    }
  }
  fs::create_directories(fs::path(out).parent_path());
  write_metric_table(out, rows);
  std::map<std::string, std::pair<double, int>> mean;
  for (const auto& r : rows) {
    mean[r.method].first += r.cc;
    ++mean[r.method].second;
  }
  for (const auto& m : methods)
    if (mean.count(m)) std::printf("mean cc %-18s %.4f over %d\n", m.c_str(), mean[m].first / mean[m].second, mean[m].second);
  std::cout << rows.size() << " rows -> " << out << " hash " << hex64(hash_file(out)) << "\n";
  return 0;
}

// -------------------------------------------------------- cloud-process

int cmd_cloud(const Globals& g, const std::string& input, std::string output, const std::string& kernel,
              double smoothing, double width) {
  const RunConfig c = resolve(g, "cloud-process");
  require_file(input, "point cloud");
  RawCloud cloud{read_xyz(input), CloudSource::kExternal};
  CloudPipelineParams p;
  p.rbf.kernel = rbf_kernel_from_string(kernel);
  p.rbf.smoothing = smoothing;
  p.rbf.gaussian_width = width;
  const DeformationDescriptor d = process_cloud(cloud, Lattice{}, p);
  if (output.empty()) output = c.paths.resolve("descriptor.csv");
  fs::create_directories(fs::path(output).parent_path());
  write_descriptor(output, d);
  std::cout << "descriptor " << output << " (" << d.rows << "x" << d.cols << ", " << d.extrapolated_sites
            << " extrapolated sites, height range " << d.heights.minCoeff() << " .. " << d.heights.maxCoeff()
            << " mm)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformable e-skin tactile reconstruction"};
  app.require_subcommand(1);
  // Global options may follow the subcommand.
  app.fallthrough();
  Globals g;
  app.add_option("-c,--config", g.config_path, "JSON run configuration");
  app.add_option("--set", g.overrides, "Override a config key, e.g. --set model.epochs=20");
  app.add_option("-o,--out", g.out_dir, std::string("Output directory (overrides ") + kOutDirEnv + ")");

  auto* gen = app.add_subcommand("gen", "Generate the simulation dataset");

  auto* tr = app.add_subcommand("train", "Train the VD2T model");

  std::vector<double> jac_bends;
  bool phantom_bends = false;
  auto* jac = app.add_subcommand("jacobian", "Compute and cache Jacobians on the coarse mesh");
  jac->add_option("--bend", jac_bends, "Bend angle in radians (repeatable); default: the dataset bends");
  jac->add_flag("--phantom-bends", phantom_bends, "Bend angles of the held-out phantoms");

  ReconArgs ra;
  auto* rec = app.add_subcommand("recon", "Reconstruct tactile maps");
  rec->add_option("-m,--method", ra.method, "tikhonov, l1, sbl, vd2t or all")->capture_default_str();
  rec->add_option("--phantom", ra.phantom, "Held-out phantom id (P1..P8) or all");
  rec->add_option("--reference", ra.reference, "Reference frame kind: flat or deformed");
  rec->add_option("--touched", ra.touched_csv, "Touched frame CSV");
  rec->add_option("--reference-frame", ra.reference_csv, "Reference frame CSV");
  rec->add_option("--bend", ra.bend, "Declared bend angle (radians) for the Jacobian");
  rec->add_option("--descriptor", ra.descriptor, "Deformation descriptor CSV (vd2t)");
  rec->add_option("--checkpoint", ra.checkpoint, "Model checkpoint (default: paths.checkpoint)");
  rec->add_option("--truth", ra.truth_csv, "Ground-truth map CSV for metrics");
  rec->add_option("--name", ra.name, "Output id for file inputs")->capture_default_str();
  rec->add_option("--upscale", ra.upscale, "Heat-map pixel upscaling")->capture_default_str()->check(CLI::PositiveNumber);

  std::string results, truth, table;
  auto* ev = app.add_subcommand("eval", "Metric table over reconstructed maps");
  ev->add_option("--results", results, "Results directory (default: paths.results)");
  ev->add_option("--truth", truth, "Truth directory (default: <results>/truth)");
  ev->add_option("--table", table, "Output CSV (default: <results>/table.csv)");

  std::string cloud_in, cloud_out, kernel = "thin-plate";
  double smoothing = 0.0, gwidth = 10.0;
  auto* cp = app.add_subcommand("cloud-process", "Point cloud to deformation descriptor");
  cp->add_option("-i,--input", cloud_in, "xyz point cloud")->required();
  cp->add_option("--output", cloud_out, "Descriptor CSV (default: <out>/descriptor.csv)");
  cp->add_option("--kernel", kernel, "thin-plate or gaussian")->capture_default_str();
  cp->add_option("--smoothing", smoothing, "RBF smoothing")->capture_default_str();
  cp->add_option("--gaussian-width", gwidth, "Gaussian kernel width (mm)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*gen) return cmd_gen(g);
    if (*tr) return cmd_train(g);
    if (*jac) return cmd_jacobian(g, jac_bends, phantom_bends);
    if (*rec) return cmd_recon(g, ra);
    if (*ev) return cmd_eval(g, results, truth, table);
    if (*cp) return cmd_cloud(g, cloud_in, cloud_out, kernel, smoothing, gwidth);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kMissingInput);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kFailure);
  }
  return 0;
}
