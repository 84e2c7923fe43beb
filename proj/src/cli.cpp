#include "sonarsweep/cli.hpp"

#include "sonarsweep/calibration.hpp"
#include "sonarsweep/errors.hpp"
#include "sonarsweep/eval.hpp"
#include "sonarsweep/io.hpp"
#include "sonarsweep/preprocess.hpp"
#include "sonarsweep/simulator.hpp"
#include "sonarsweep/sweep.hpp"

#include <CLI11.hpp>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sonarsweep {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Lets a JSON config file supply option values. Keys are the long flag names
// with dashes replaced by underscores; anything given on the command line wins.
class ConfigBinder {
 public:
  explicit ConfigBinder(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with option values (keys: flag names, "
                                                "'_' for '-'); command-line flags override it");
  }

  template <typename T>
  CLI::Option* option(const std::string& flag, T& target, const std::string& help) {
    CLI::Option* opt = app_->add_option(flag, target, help);
    if constexpr (!is_optional<T>::value) opt->capture_default_str();
    bind(flag, opt, [&target](const json& j) {
      if constexpr (is_optional<T>::value) {
        target = j.get<typename T::value_type>();
      } else {
        target = j.get<T>();
      }
    });
    return opt;
  }

  CLI::Option* flag(const std::string& flag, bool& target, const std::string& help) {
    CLI::Option* opt = app_->add_flag(flag, target, help);
    bind(flag, opt, [&target](const json& j) { target = j.get<bool>(); });
    return opt;
  }

  void apply() const {
    if (config_path_.empty()) return;
    const json j = read_json(config_path_);
    if (!j.is_object()) throw ValidationError(config_path_ + ": config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      const auto it = setters_.find(key);
      if (it == setters_.end()) {
        throw ValidationError(config_path_ + ": unknown key '" + key + "' for '" +
                              app_->get_name() + "'");
      }
      if (it->second.first->count() > 0) continue;
      try {
        it->second.second(value);
      } catch (const json::exception& e) {
        throw ValidationError(config_path_ + ": bad value for '" + key + "': " + e.what());
      }
    }
  }

 private:
  template <typename T>
  struct is_optional : std::false_type {};
  template <typename T>
  struct is_optional<std::optional<T>> : std::true_type {};

  void bind(const std::string& flag, CLI::Option* opt, std::function<void(const json&)> set) {
    std::string key = flag.substr(flag.find_first_not_of('-'));
    std::replace(key.begin(), key.end(), '-', '_');
    setters_[key] = {opt, std::move(set)};
  }

  CLI::App* app_;
  std::string config_path_;
  std::map<std::string, std::pair<CLI::Option*, std::function<void(const json&)>>> setters_;
};

Mask mask_from_pgm(const Image<std::uint8_t>& pgm) {
  if (pgm.channels() != 1) throw InputDataError("mask must be a gray PGM");
  Mask m(pgm.width(), pgm.height(), 1, 0);
  for (std::size_t i = 0; i < m.data().size(); ++i) m.data()[i] = pgm.data()[i] != 0 ? 1 : 0;
  return m;
}

Image<std::uint8_t> mask_to_pgm(const Mask& mask) {
  Image<std::uint8_t> out(mask.width(), mask.height(), 1, 0);
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = mask.data()[i] ? 255 : 0;
  return out;
}

Image<float> to_float(const Image<double>& image, const Mask& valid) {
  Image<float> out(image.width(), image.height(), 1, 0.0f);
  for (int v = 0; v < image.height(); ++v)
    for (int u = 0; u < image.width(); ++u)
      if (valid.at(u, v)) out.at(u, v) = static_cast<float>(image.at(u, v));
  return out;
}

DepthMap load_depth(const fs::path& depth_path, const std::string& mask_path) {
  const Image<float> depth = read_pfm(depth_path);
  DepthMap map(depth.width(), depth.height());
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      map.depth.at(u, v) = depth.at(u, v);
      map.valid.at(u, v) = depth.at(u, v) > 0.0f ? 1 : 0;
    }
  }
  if (!mask_path.empty()) {
    const Mask mask = mask_from_pgm(read_pnm(mask_path));
    if (!mask.same_size(depth)) throw InputDataError(mask_path + ": mask size differs from depth");
    for (std::size_t i = 0; i < mask.data().size(); ++i) map.valid.data()[i] &= mask.data()[i];
  }
  return map;
}

PolarSonarImage load_sonar(const fs::path& path, const SonarSpec& spec) {
  Image<float> values = read_pfm(path);
  try {
    return PolarSonarImage(std::move(values), spec);
  } catch (const InputDataError& e) {
    throw InputDataError(path.string() + ": " + e.what());
  }
}

// Expands directories into their *.pfm files (sorted); files pass through.
std::vector<fs::path> expand_pfm_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".pfm") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw ValidationError("no such file or directory '" + in + "'");
    }
  }
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw ValidationError(what + " '" + path + "' does not exist");
}

Rgb parse_rgb(const std::vector<double>& v, const std::string& what) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ValidationError(what + " takes one value or three (red, green, blue)");
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::string out;
  std::string scene;
  std::string calibration;
  std::uint64_t seed = 0;
  double speckle = 0.0;
  double noise_floor = 0.0;
  int background_frames = 8;
  int elevation_rays = 64;
  int plane_index = 34;
  double pitch_deg = 15.0;
  double height = 1.5;
};

void add_simulate(CLI::App& app, SimulateOptions& o, std::deque<ConfigBinder>& binders) {
  auto* sub = app.add_subcommand(
      "simulate",
      "Render a synthetic dataset: camera.pgm, sonar.pfm + sonar.json, gt_depth.pfm, "
      "gt_mask.pgm, calibration.json, scene.json and background/NNN.pfm");
  auto& b = binders.emplace_back(sub);
  b.option("--out", o.out, "Output dataset directory")->required();
  b.option("--scene", o.scene,
           "Scene JSON in world coordinates (default: inclined plane + sphere)");
  b.option("--calibration", o.calibration, "Calibration JSON (default: built-in rig)");
  b.option("--seed", o.seed, "Noise seed");
  b.option("--speckle", o.speckle, "Multiplicative speckle std-dev (unitless, >= 0)");
  b.option("--noise-floor", o.noise_floor, "Additive sonar background level (intensity, >= 0)");
  b.option("--background-frames", o.background_frames,
           "Object-free sonar frames to render (count, >= 0)");
  b.option("--elevation-rays", o.elevation_rays, "Elevation strata per bearing bin (count, >= 1)");
  b.option("--plane-index", o.plane_index,
           "Hypothesis plane (0-based) the default scene's wall sits on");
  b.option("--pitch-deg", o.pitch_deg, "Downward pitch of the sensor pod (degrees)");
  b.option("--height", o.height, "Height of the sonar above the world origin (meters)");
}

int run_simulate(const SimulateOptions& o) {
  if (o.speckle < 0.0 || o.noise_floor < 0.0) {
    throw ValidationError("--speckle and --noise-floor must be >= 0");
  }
  if (o.background_frames < 0) throw ValidationError("--background-frames must be >= 0");
  if (o.elevation_rays < 1) throw ValidationError("--elevation-rays must be >= 1");
  if (!o.scene.empty()) require_file(o.scene, "scene file");
  if (!o.calibration.empty()) require_file(o.calibration, "calibration file");

  Rig rig;
  rig.calibration = o.calibration.empty() ? default_calibration() : load_calibration(o.calibration);
  rig.calibration.validate();
  const Eigen::Matrix3d pitch =
      Eigen::AngleAxisd(-deg_to_rad(o.pitch_deg), Eigen::Vector3d::UnitX()).toRotationMatrix();
  rig.world_from_sonar = RigidTransform(pitch, Eigen::Vector3d(0.0, 0.0, o.height));
  if (o.plane_index < 0 ||
      static_cast<std::size_t>(o.plane_index) >= rig.calibration.planes.size()) {
    throw ValidationError("--plane-index out of range");
  }
  const Scene scene = o.scene.empty()
                          ? default_scene(rig, static_cast<std::size_t>(o.plane_index))
                          : scene_from_json(read_json(o.scene));

  const SonarRenderConfig render{o.elevation_rays};
  const CameraRender camera =
      render_camera(scene, rig.calibration.intrinsics, rig.world_from_camera());
  PolarSonarImage sonar = render_sonar(scene, rig.calibration.sonar, rig.world_from_sonar, render);
  sonar = add_sonar_noise(sonar, {o.speckle, o.noise_floor, o.seed});

  OutputTransaction out(o.out);
  out.add("calibration.json", to_json(rig.calibration).dump(2) + "\n");
  out.add("scene.json", to_json(scene).dump(2) + "\n");
  out.add("camera.pgm", encode_pgm(to_8bit(camera.image)));
  out.add("sonar.pfm", encode_pfm(sonar.intensity));
  out.add("sonar.json", to_json(rig.calibration.sonar).dump(2) + "\n");
  out.add("gt_depth.pfm", encode_pfm(to_float(camera.depth.depth, camera.depth.valid)));
  out.add("gt_mask.pgm", encode_pgm(mask_to_pgm(camera.depth.valid)));

  Scene background;
  for (const auto& p : scene.primitives) {
    if (p.is_static) background.primitives.push_back(p);
  }
  const PolarSonarImage clean_background =
      render_sonar(background, rig.calibration.sonar, rig.world_from_sonar, render);
  for (int f = 0; f < o.background_frames; ++f) {
    const PolarSonarImage frame = add_sonar_noise(
        clean_background, {o.speckle, o.noise_floor, o.seed + 1 + static_cast<std::uint64_t>(f)});
    char name[32];
    std::snprintf(name, sizeof name, "background/%03d.pfm", f);
    out.add(name, encode_pfm(frame.intensity));
  }
  out.commit();
  return kExitOk;
}

// -------------------------------------------------------------- preprocess

struct PreprocessOptions {
  std::vector<std::string> frames;
  std::vector<std::string> background;
  std::string calibration;
  std::string camera;
  std::string out;
  int median_radius = 1;
};

void add_preprocess(CLI::App& app, PreprocessOptions& o, std::deque<ConfigBinder>& binders) {
  auto* sub = app.add_subcommand(
      "preprocess",
      "Clean sonar frames (median denoise frame and background mean, then subtract) and "
      "prepare a camera image (crop to the sonar frustum, luma, histogram equalization)");
  auto& b = binders.emplace_back(sub);
  b.option("--frames", o.frames, "Sonar frames: PFM files or directories of them")->required();
  b.option("--background", o.background,
           "Object-free sonar frames: PFM files or directories of them")
      ->required();
  b.option("--calibration", o.calibration, "Calibration JSON (sonar geometry, camera crop)")
      ->required();
  b.option("--camera", o.camera, "Camera image (PGM/PPM) to prepare");
  b.option("--median-radius", o.median_radius, "Median filter radius (bins, 0 disables)");
  b.option("--out", o.out, "Output directory")->required();
}

int run_preprocess(const PreprocessOptions& o) {
  if (o.median_radius < 0) throw ValidationError("--median-radius must be >= 0");
  require_file(o.calibration, "calibration file");
  if (!o.camera.empty()) require_file(o.camera, "camera image");
  const Calibration calibration = load_calibration(o.calibration);
  calibration.validate();
  const auto frame_paths = expand_pfm_inputs(o.frames);
  const auto background_paths = expand_pfm_inputs(o.background);
  if (frame_paths.empty()) throw ValidationError("--frames matched no PFM file");
  if (background_paths.empty()) throw ValidationError("--background matched no PFM file");

  std::vector<PolarSonarImage> backgrounds;
  for (const auto& p : background_paths) backgrounds.push_back(load_sonar(p, calibration.sonar));
  const BackgroundModel model = average_background(backgrounds);

  OutputTransaction out(o.out);
  std::set<std::string> names;
  for (const auto& p : frame_paths) {
    const std::string name = p.filename().string();
    if (!names.insert(name).second) throw ValidationError("two frames share the name " + name);
    const PolarSonarImage cleaned =
        clean_sonar_frame(load_sonar(p, calibration.sonar), model, o.median_radius);
    out.add(name, encode_pfm(cleaned.intensity));
  }
  out.add("background_model.pfm", encode_pfm(denoise(model.mean, o.median_radius).intensity));
  out.add("sonar.json", to_json(calibration.sonar).dump(2) + "\n");
  if (!o.camera.empty()) {
    const PreparedCamera prepared = prepare_camera(read_pnm(o.camera), calibration);
    out.add("camera_prepared.pgm", encode_pgm(prepared.image));
    out.add("crop.json", to_json(prepared.crop).dump(2) + "\n");
  }
  out.commit();
  return kExitOk;
}

// ------------------------------------------------------------------- sweep

struct SweepOptions {
  std::string dataset;
  std::string camera;
  std::string sonar;
  std::string calibration;
  std::string out;
  std::string features = "zncc-patch";
  int patch_radius = PipelineConfig{}.features.patch_radius;
  std::string metric = "neg-zncc";
  double cost_scale = PipelineConfig{}.cost.scale;
  int reg_radius = PipelineConfig{}.regularizer.radius;
  int reg_passes = PipelineConfig{}.regularizer.passes;
  std::optional<double> alpha_deg;
  std::optional<double> d0;
  std::optional<double> k;
  std::optional<int> planes;
  bool no_prepare = false;
  bool no_elevation_gate = false;
  bool zero_sonar = false;
  bool export_cost_volume = false;
};

void add_sweep(CLI::App& app, SweepOptions& o, std::deque<ConfigBinder>& binders) {
  auto* sub = app.add_subcommand(
      "sweep",
      "Run the plane sweep: writes depth.pfm (meters, 0 where masked), mask.pgm, "
      "plane_distance.pfm (meters), crop.json and optionally cost_volume.sscv");
  auto& b = binders.emplace_back(sub);
  b.option("--dataset", o.dataset,
           "Dataset directory providing camera.pgm, sonar.pfm and calibration.json");
  b.option("--camera", o.camera, "Camera image (PGM/PPM), overrides the dataset's");
  b.option("--sonar", o.sonar, "Polar sonar image (PFM), overrides the dataset's");
  b.option("--calibration", o.calibration, "Calibration JSON, overrides the dataset's");
  b.option("--out", o.out, "Output directory")->required();
  b.option("--features", o.features, "Extractor: intensity | gradient | zncc-patch");
  b.option("--patch-radius", o.patch_radius, "zncc-patch radius (pixels)");
  b.option("--metric", o.metric, "Cost metric: sad | neg-dot | neg-zncc");
  b.option("--cost-scale", o.cost_scale, "Cost multiplier before the softmax (unitless, > 0)");
  b.option("--reg-radius", o.reg_radius, "Box regularizer radius (pixels, 0 disables)");
  b.option("--reg-passes", o.reg_passes, "Box regularizer passes (count)");
  b.option("--alpha-deg", o.alpha_deg, "Plane inclination override (degrees)");
  b.option("--d0", o.d0, "First plane distance override (meters)");
  b.option("--k", o.k, "Plane distance ratio override (unitless, > 1)");
  b.option("--planes", o.planes, "Plane count override (count, >= 2)");
  b.flag("--no-prepare", o.no_prepare, "Use the whole image without crop or equalization");
  b.flag("--no-elevation-gate", o.no_elevation_gate,
         "Keep plane points outside the sonar's vertical aperture");
  b.flag("--zero-sonar", o.zero_sonar, "Ablation: zero the sonar image before warping");
  b.flag("--export-cost-volume", o.export_cost_volume,
         "Also write the raw cost volume as cost_volume.sscv");
}

std::string resolve(const std::string& explicit_path, const std::string& dataset,
                    const std::string& name, const std::string& what) {
  std::string path = explicit_path;
  if (path.empty()) {
    if (dataset.empty()) throw ValidationError("need --" + what + " or --dataset");
    path = (fs::path(dataset) / name).string();
  }
  require_file(path, what);
  return path;
}

int run_sweep(const SweepOptions& o) {
  PipelineConfig config;
  config.features = {parse_feature_kind(o.features), o.patch_radius};
  config.cost = {parse_metric(o.metric), o.cost_scale};
  config.regularizer = {o.reg_radius, o.reg_passes};
  config.prepare_camera = !o.no_prepare;
  config.gate_elevation = !o.no_elevation_gate;
  config.zero_sonar_features = o.zero_sonar;
  config.export_cost_volume = o.export_cost_volume;
  config.validate();

  const std::string camera_path = resolve(o.camera, o.dataset, "camera.pgm", "camera");
  const std::string sonar_path = resolve(o.sonar, o.dataset, "sonar.pfm", "sonar");
  const std::string calibration_path =
      resolve(o.calibration, o.dataset, "calibration.json", "calibration");

  Calibration calibration = load_calibration(calibration_path);
  if (o.alpha_deg || o.d0 || o.k || o.planes) {
    const auto& p = calibration.planes;
    calibration.planes = PlaneHypothesisSet(o.alpha_deg ? deg_to_rad(*o.alpha_deg) : p.alpha(),
                                            o.d0.value_or(p.d0()), o.k.value_or(p.k()),
                                            o.planes.value_or(static_cast<int>(p.size())));
  }
  calibration.validate();

  const Image<std::uint8_t> camera = read_pnm(camera_path);
  const PolarSonarImage sonar = load_sonar(sonar_path, calibration.sonar);
  const PipelineResult result = run_pipeline(camera, sonar, calibration, config);

  OutputTransaction out(o.out);
  out.add("depth.pfm", encode_pfm(to_float(result.depth.depth, result.depth.valid)));
  out.add("mask.pgm", encode_pgm(mask_to_pgm(result.depth.valid)));
  out.add("plane_distance.pfm",
          encode_pfm(to_float(result.depth.plane_distance, result.depth.valid)));
  out.add("crop.json", to_json(result.crop).dump(2) + "\n");
  if (result.cost_volume) out.add("cost_volume.sscv", encode_cost_volume(*result.cost_volume));
  out.commit();
  std::printf("valid pixels: %zu of %d\n", result.depth.valid_count(),
              result.depth.width() * result.depth.height());
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalOptions {
  std::string pred;
  std::string pred_mask;
  std::string gt;
  std::string gt_mask;
  std::vector<double> bins;
  double threshold = 1.25;
  std::string out;
};

void add_eval(CLI::App& app, EvalOptions& o, std::deque<ConfigBinder>& binders) {
  auto* sub = app.add_subcommand(
      "eval",
      "Compare a predicted depth map with ground truth: prints Abs Rel, Abs Diff (m), "
      "RMSE (m), a1; --out writes metrics.json, metrics.txt and error_vs_distance.csv");
  auto& b = binders.emplace_back(sub);
  b.option("--pred", o.pred, "Predicted depth PFM (meters)")->required();
  b.option("--pred-mask", o.pred_mask, "Prediction validity PGM (nonzero = valid)");
  b.option("--gt", o.gt, "Ground-truth depth PFM (meters)")->required();
  b.option("--gt-mask", o.gt_mask, "Ground-truth validity PGM (nonzero = valid)");
  b.option("--bins", o.bins, "Distance bin edges for the error-vs-distance table (meters)")
      ->delimiter(',');
  b.option("--threshold", o.threshold, "a1 ratio threshold (unitless, > 1)");
  b.option("--out", o.out, "Output directory for the report files");
}

int run_eval(const EvalOptions& o) {
  if (!(o.threshold > 1.0)) throw ValidationError("--threshold must exceed 1");
  require_file(o.pred, "prediction");
  require_file(o.gt, "ground truth");
  if (!o.pred_mask.empty()) require_file(o.pred_mask, "prediction mask");
  if (!o.gt_mask.empty()) require_file(o.gt_mask, "ground-truth mask");
  for (std::size_t i = 1; i < o.bins.size(); ++i) {
    if (!(o.bins[i] > o.bins[i - 1])) throw ValidationError("--bins must be strictly increasing");
  }
  if (o.bins.size() == 1) throw ValidationError("--bins needs at least two edges");

  const DepthMap pred = load_depth(o.pred, o.pred_mask);
  const DepthMap gt = load_depth(o.gt, o.gt_mask);
  const MetricsReport report = compute_metrics(pred, gt, o.threshold);
  const std::string table = format_metrics_table(report);
  std::fputs(table.c_str(), stdout);

  if (!o.out.empty()) {
    OutputTransaction out(o.out);
    json j = to_json(report);
    j["a1_threshold"] = o.threshold;
    out.add("metrics.json", j.dump(2) + "\n");
    out.add("metrics.txt", table);
    if (!o.bins.empty()) {
      out.add("error_vs_distance.csv",
              distance_bins_csv(error_vs_distance(pred, gt, o.bins)));
    }
    out.commit();
  }
  return kExitOk;
}

// --------------------------------------------------------------- turbidity

struct TurbidityOptions {
  std::string in;
  std::string out;
  std::string type;
  std::vector<double> t1;
  double d = 2.5;
  std::vector<double> ambient{0.5};
  std::string depth;
};

void add_turbidity(CLI::App& app, TurbidityOptions& o, std::deque<ConfigBinder>& binders) {
  auto* sub = app.add_subcommand(
      "turbidity",
      "Synthesize a turbid RGB image I = J T^d + (1 - T^d) B from a clear gray or RGB image");
  auto& b = binders.emplace_back(sub);
  b.option("--in", o.in, "Clear image (PGM/PPM)")->required();
  b.option("--out", o.out, "Output PPM file")->required();
  auto* type = b.option("--type", o.type, "Water type preset: 1C | 3C | 5C");
  auto* t1 = b.option("--t1", o.t1, "Per-meter transmission, one value or R,G,B (0 < T <= 1)");
  t1->delimiter(',');
  type->excludes(t1);
  b.option("--d", o.d, "Path length (meters, >= 0)");
  b.option("--ambient", o.ambient, "Ambient light B, one value or R,G,B (intensity in [0, 1])")
      ->delimiter(',');
  b.option("--depth", o.depth, "Per-pixel path length PFM (meters); replaces --d");
}

int run_turbidity(const TurbidityOptions& o) {
  if (o.type.empty() == o.t1.empty()) throw ValidationError("give exactly one of --type or --t1");
  const Rgb transmission =
      o.type.empty() ? parse_rgb(o.t1, "--t1") : jerlov_water_type(o.type).transmission;
  const Rgb ambient = parse_rgb(o.ambient, "--ambient");
  if (!(o.d >= 0.0)) throw ValidationError("--d must be >= 0");
  for (int c = 0; c < 3; ++c) {
    if (!(transmission[c] > 0.0 && transmission[c] <= 1.0)) {
      throw ValidationError("transmission must lie in (0, 1]");
    }
    if (!(ambient[c] >= 0.0 && ambient[c] <= 1.0)) {
      throw ValidationError("ambient light must lie in [0, 1]");
    }
  }
  require_file(o.in, "input image");
  if (!o.depth.empty()) require_file(o.depth, "depth map");

  const Image<std::uint8_t> clear8 = read_pnm(o.in);
  Image<float> clear(clear8.width(), clear8.height(), clear8.channels());
  for (std::size_t i = 0; i < clear.data().size(); ++i) clear.data()[i] = clear8.data()[i] / 255.0f;

  Image<float> turbid;
  if (o.depth.empty()) {
    turbid = apply_turbidity(clear, transmission, ambient, o.d);
  } else {
    const Image<float> depth = read_pfm(o.depth);
    Image<double> d(depth.width(), depth.height(), 1);
    for (std::size_t i = 0; i < d.data().size(); ++i) d.data()[i] = depth.data()[i];
    turbid = apply_turbidity(clear, transmission, ambient, d);
  }

  const fs::path out_path(o.out);
  OutputTransaction out(out_path.has_parent_path() ? out_path.parent_path() : fs::path("."));
  out.add(out_path.filename().string(), encode_ppm(to_8bit(turbid)));
  out.commit();
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{
      "Opti-acoustic plane sweep: simulate data, preprocess, reconstruct depth, evaluate.\n"
      "Exit codes: 0 success, 2 invalid arguments or configuration, 3 bad input data, "
      "4 numerical failure. Outputs are written atomically.",
      "sonarsweep"};
  app.require_subcommand(1);
  std::deque<ConfigBinder> binders;  // stable addresses: CLI11 binds to members

  SimulateOptions simulate;
  PreprocessOptions preprocess;
  SweepOptions sweep;
  EvalOptions eval;
  TurbidityOptions turbidity;
  add_simulate(app, simulate, binders);
  add_preprocess(app, preprocess, binders);
  add_sweep(app, sweep, binders);
  add_eval(app, eval, binders);
  add_turbidity(app, turbidity, binders);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    for (const auto& b : binders) b.apply();
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "simulate") return run_simulate(simulate);
    if (name == "preprocess") return run_preprocess(preprocess);
    if (name == "sweep") return run_sweep(sweep);
    if (name == "eval") return run_eval(eval);
    return run_turbidity(turbidity);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InputDataError& e) {
    std::cerr << "input data error: " << e.what() << "\n";
    return kExitInputData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sonarsweep
