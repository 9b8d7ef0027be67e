#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "dsrvae/checkpoint.hpp"
#include "dsrvae/config.hpp"
#include "dsrvae/degrade.hpp"
#include "dsrvae/metrics.hpp"
#include "dsrvae/train.hpp"

namespace dsrvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- helpers --------------------------------------------------------------

inline std::string crc32_of_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read file for checksum: " + path);
  uLong crc = crc32(0L, Z_NULL, 0);
  char buf[65536];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0)
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf),
                static_cast<uInt>(f.gcount()));
  char hex[16];
  std::snprintf(hex, sizeof(hex), "%08lx", static_cast<unsigned long>(crc));
  return hex;
}

inline std::vector<std::string> list_pngs(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

// Manifest written atomically next to every output directory; replaying it
// reproduces the run bit-identically.
inline void write_manifest(const std::string& out_dir, const std::string& subcommand,
                           const json& inputs, const json& config,
                           std::uint64_t seed) {
  json m;
  m["subcommand"] = subcommand;
  m["inputs"] = inputs;
  m["config"] = config;
  m["seed"] = seed;
  m["output_dir"] = out_dir;
  json artifacts = json::object();
  for (const auto& name : [&] {
         std::vector<std::string> files;
         for (const auto& e : fs::directory_iterator(out_dir))
           if (e.is_regular_file() && e.path().filename() != "manifest.json")
             files.push_back(e.path().filename().string());
         std::sort(files.begin(), files.end());
         return files;
       }())
    artifacts[name] = crc32_of_file(out_dir + "/" + name);
  m["artifacts"] = artifacts;
  const std::string tmp = out_dir + "/manifest.json.tmp";
  {
    std::ofstream f(tmp);
    f << m.dump(2) << "\n";
  }
  fs::rename(tmp, out_dir + "/manifest.json");
}

// Replicate-pad an image up to the next multiple of `mult` on each axis.
template <class T>
BasicImage<T> replicate_pad_to_multiple(const BasicImage<T>& img, int mult) {
  const int h = ((img.height + mult - 1) / mult) * mult;
  const int w = ((img.width + mult - 1) / mult) * mult;
  if (h == img.height && w == img.width) return img;
  BasicImage<T> out(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) =
            img.at(c, std::min(y, img.height - 1), std::min(x, img.width - 1));
  return out;
}

template <class T>
BasicImage<T> crop_top_left(const BasicImage<T>& img, int h, int w) {
  BasicImage<T> out(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, x);
  return out;
}

// ---- loss-curve plot ------------------------------------------------------

namespace plot {

inline void draw_line(BasicImage<float>& img, int x0, int y0, int x1, int y1,
                      float r, float g, float b) {
  const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
  for (int i = 0; i <= steps; ++i) {
    const int x = x0 + (x1 - x0) * i / steps;
    const int y = y0 + (y1 - y0) * i / steps;
    if (x >= 0 && x < img.width && y >= 0 && y < img.height) {
      img.at(0, y, x) = r;
      img.at(1, y, x) = g;
      img.at(2, y, x) = b;
    }
  }
}

inline void polyline(BasicImage<float>& img, const std::vector<double>& ys,
                     double lo, double hi, float r, float g, float b) {
  if (ys.size() < 2) return;
  const int mx = 40, my = 20;
  const int pw = img.width - 2 * mx, ph = img.height - 2 * my;
  auto px = [&](std::size_t i) {
    return mx + static_cast<int>(static_cast<double>(pw) * i / (ys.size() - 1));
  };
  auto py = [&](double v) {
    const double t = (hi > lo) ? (v - lo) / (hi - lo) : 0.5;
    return my + ph - static_cast<int>(t * ph);
  };
  for (std::size_t i = 1; i < ys.size(); ++i)
    draw_line(img, px(i - 1), py(ys[i - 1]), px(i), py(ys[i]), r, g, b);
}

}  // namespace plot

// Static PNG with the per-iteration loss curves.
inline void write_loss_plot(const std::vector<LossRecord>& log, const std::string& path) {
  BasicImage<float> img(400, 640);
  std::fill(img.v.begin(), img.v.end(), 1.0f);  // white
  plot::draw_line(img, 40, 20, 40, 380, 0, 0, 0);
  plot::draw_line(img, 40, 380, 600, 380, 0, 0, 0);
  if (!log.empty()) {
    std::vector<double> total, recon, cycle;
    for (const auto& r : log) {
      total.push_back(r.terms.total);
      recon.push_back(r.terms.reconstruction);
      cycle.push_back(r.terms.cycle_lowfreq + r.terms.cycle_backproj);
    }
    double lo = 0.0, hi = 1e-9;
    for (double v : total) hi = std::max(hi, v);
    plot::polyline(img, total, lo, hi, 0.8f, 0.1f, 0.1f);
    plot::polyline(img, recon, lo, hi, 0.1f, 0.4f, 0.8f);
    plot::polyline(img, cycle, lo, hi, 0.1f, 0.6f, 0.2f);
  }
  save_image(img, path);
}

// ---- subcommands ----------------------------------------------------------

struct DegradeArgs {
  std::string in_dir;
  std::string out_dir;
  DegradationSpec spec;  // spec.seed is the base seed
};

inline int cmd_degrade(const DegradeArgs& args, std::ostream& err = std::cerr) {
  const auto files = list_pngs(args.in_dir);
  if (files.empty()) {
    err << "degrade: no PNG files in " << args.in_dir << "\n";
    return 1;
  }
  fs::create_directories(args.out_dir);
  int failures = 0;
  for (const auto& name : files) {
    try {
      auto img = load_image<float>(args.in_dir + "/" + name);
      DegradationSpec s = args.spec;
      s.seed = hash_combine(args.spec.seed, hash_string(name));
      save_image(degrade(img, s), args.out_dir + "/" + name);
    } catch (const std::exception& e) {
      err << "degrade: " << name << ": " << e.what() << "\n";
      ++failures;
    }
  }
  write_manifest(args.out_dir, "degrade", json{{"in_dir", args.in_dir}},
                 cfgio::to_json(args.spec), args.spec.seed);
  return failures ? 1 : 0;
}

struct TrainArgs {
  TrainConfig config;
  std::string source_dir;  // LR/degraded domain (sr, joint)
  std::string target_dir;  // clean reference domain
  std::string out_dir;
  std::string resume_path;  // optional: checkpoint of the same phase
  std::string init_path;    // optional: prior-phase checkpoint (sr/joint)
};

inline int cmd_train(const TrainArgs& args, std::ostream& err = std::cerr) {
  try {
    fs::create_directories(args.out_dir);
    DatasetHandle ds = DatasetHandle::open(args.source_dir, args.target_dir);

    std::optional<LoadedCheckpoint<float>> resume, init;
    if (!args.resume_path.empty())
      resume = load_checkpoint<float>(args.resume_path);
    if (!args.init_path.empty()) init = load_checkpoint<float>(args.init_path);

    TrainResult res;
    const TrainConfig& cfg = args.config;
    try {
      switch (cfg.phase) {
        case TrainPhase::dae:
          res = train_dae(ds, cfg, resume ? &*resume : nullptr);
          break;
        case TrainPhase::sr: {
          const LoadedCheckpoint<float>* start = resume ? &*resume : init ? &*init : nullptr;
          if (!start)
            throw std::invalid_argument("sr phase needs --init or --resume checkpoint");
          res = train_sr(ds, cfg, *start, resume ? &*resume : nullptr);
          break;
        }
        case TrainPhase::joint: {
          const LoadedCheckpoint<float>* start = resume ? &*resume : init ? &*init : nullptr;
          if (!start)
            throw std::invalid_argument("joint phase needs --init or --resume checkpoint");
          res = train_joint(ds, cfg, *start, resume ? &*resume : nullptr);
          break;
        }
      }
    } catch (const TrainingDiverged& d) {
      err << d.what() << "\n";
      json dump = json::array();
      for (const auto& r : d.last_records)
        dump.push_back({{"iteration", r.iteration}, {"total", r.terms.total}});
      std::ofstream(args.out_dir + "/divergence.json") << dump.dump(2) << "\n";
      // the last good checkpoint, if any, is left untouched in out_dir
      return 1;
    }

    save_checkpoint(res.params, res.model, res.meta, args.out_dir + "/checkpoint.ckpt");
    write_loss_log(res.log, args.out_dir + "/loss_log.jsonl");
    write_loss_plot(res.log, args.out_dir + "/loss_curve.png");
    json inputs{{"source_dir", args.source_dir},
                {"target_dir", args.target_dir},
                {"resume", args.resume_path},
                {"init", args.init_path}};
    write_manifest(args.out_dir, "train", inputs, cfgio::to_json(cfg), cfg.seed);
    return 0;
  } catch (const std::exception& e) {
    err << "train: " << e.what() << "\n";
    return 1;
  }
}

enum class InferMode { denoise, sr, denoise_sr };

struct InferArgs {
  std::string ckpt_path;
  std::string in_dir;
  std::string out_dir;
  InferMode mode = InferMode::denoise_sr;
};

inline int cmd_infer(const InferArgs& args, std::ostream& err = std::cerr) {
  LoadedCheckpoint<float> ckpt;
  try {
    ckpt = load_checkpoint<float>(args.ckpt_path);
  } catch (const std::exception& e) {
    err << "infer: " << e.what() << "\n";
    return 1;
  }
  const auto files = list_pngs(args.in_dir);
  if (files.empty()) {
    err << "infer: no PNG files in " << args.in_dir << "\n";
    return 1;
  }
  fs::create_directories(args.out_dir);
  int failures = 0;
  for (const auto& name : files) {
    try {
      auto img = load_image<float>(args.in_dir + "/" + name);
      BasicImage<float> out = img;
      if (args.mode == InferMode::denoise || args.mode == InferMode::denoise_sr) {
        const int h = out.height, w = out.width;
        auto padded = replicate_pad_to_multiple(out, 16);
        auto den = tensor_to_image(
            denoise_inference(ckpt.params, ckpt.config, image_to_tensor(padded)));
        out = crop_top_left(den, h, w);
      }
      if (args.mode == InferMode::sr || args.mode == InferMode::denoise_sr) {
        out = tensor_to_image(super_resolve(ckpt.params, ckpt.config,
                                            image_to_tensor(out), ckpt.config.alpha));
      }
      save_image(out, args.out_dir + "/" + name);
    } catch (const std::exception& e) {
      err << "infer: " << name << ": " << e.what() << "\n";
      ++failures;
    }
  }
  const char* mode_name = args.mode == InferMode::denoise   ? "denoise"
                          : args.mode == InferMode::sr      ? "sr"
                                                            : "denoise+sr";
  write_manifest(args.out_dir, "infer",
                 json{{"ckpt", args.ckpt_path}, {"in_dir", args.in_dir},
                      {"mode", mode_name}},
                 json::object(), 0);
  return failures ? 1 : 0;
}

struct EvaluateArgs {
  std::string pred_dir;
  std::string ref_dir;
  std::string report_path;
};

inline MetricReport evaluate_corpus(const std::string& pred_dir,
                                    const std::string& ref_dir) {
  const auto preds = list_pngs(pred_dir);
  const auto refs = list_pngs(ref_dir);
  std::set<std::string> pset(preds.begin(), preds.end());
  std::set<std::string> rset(refs.begin(), refs.end());
  std::string missing;
  for (const auto& p : preds)
    if (!rset.count(p)) missing += "  missing in " + ref_dir + ": " + p + "\n";
  for (const auto& r : refs)
    if (!pset.count(r)) missing += "  missing in " + pred_dir + ": " + r + "\n";
  if (!missing.empty())
    throw std::runtime_error("evaluate: unmatched filenames between " + pred_dir +
                             " and " + ref_dir + ":\n" + missing);
  std::vector<std::pair<std::string, std::pair<BasicImage<double>, BasicImage<double>>>>
      pairs;
  for (const auto& name : preds)
    pairs.push_back({name,
                     {load_image<double>(pred_dir + "/" + name),
                      load_image<double>(ref_dir + "/" + name)}});
  if (pairs.empty())
    throw std::runtime_error("evaluate: no common files between " + pred_dir + " and " +
                             ref_dir);
  return evaluate_pairs(pairs);
}

inline int cmd_evaluate(const EvaluateArgs& args, std::ostream& err = std::cerr,
                        std::ostream& out = std::cout) {
  try {
    MetricReport rep = evaluate_corpus(args.pred_dir, args.ref_dir);
    std::ofstream f(args.report_path);
    if (!f) throw std::runtime_error("cannot write report: " + args.report_path);
    f << "filename,psnr_y,psnr_rgb,ssim\n";
    f.precision(10);
    for (const auto& r : rep.rows)
      f << r.name << "," << r.psnr_y << "," << r.psnr_rgb << "," << r.ssim << "\n";
    f << "mean," << rep.mean_psnr_y << "," << rep.mean_psnr_rgb << ","
      << rep.mean_ssim << "\n";
    json summary{{"files", rep.rows.size()},
                 {"mean_psnr_y", rep.mean_psnr_y},
                 {"mean_psnr_rgb", rep.mean_psnr_rgb},
                 {"mean_ssim", rep.mean_ssim}};
    std::ofstream(args.report_path + ".summary.json") << summary.dump(2) << "\n";
    out << summary.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "evaluate: " << e.what() << "\n";
    return 1;
  }
}

// Re-executes a recorded run into `scratch_dir` and reports whether every
// artifact checksum matches the manifest.
inline bool replay_manifest(const std::string& manifest_path,
                            const std::string& scratch_dir,
                            std::ostream& err = std::cerr) {
  json m;
  std::ifstream(manifest_path) >> m;
  const std::string sub = m.at("subcommand");
  fs::create_directories(scratch_dir);
  int rc = 1;
  if (sub == "degrade") {
    DegradeArgs a;
    a.in_dir = m["inputs"]["in_dir"];
    a.out_dir = scratch_dir;
    a.spec = cfgio::degradation_from_json(m["config"]);
    rc = cmd_degrade(a, err);
  } else if (sub == "train") {
    TrainArgs a;
    a.config = cfgio::train_from_json(m["config"]);
    a.source_dir = m["inputs"]["source_dir"];
    a.target_dir = m["inputs"]["target_dir"];
    a.resume_path = m["inputs"]["resume"];
    a.init_path = m["inputs"]["init"];
    a.out_dir = scratch_dir;
    rc = cmd_train(a, err);
  } else if (sub == "infer") {
    InferArgs a;
    a.ckpt_path = m["inputs"]["ckpt"];
    a.in_dir = m["inputs"]["in_dir"];
    const std::string mode = m["inputs"]["mode"];
    a.mode = mode == "denoise" ? InferMode::denoise
             : mode == "sr"    ? InferMode::sr
                               : InferMode::denoise_sr;
    a.out_dir = scratch_dir;
    rc = cmd_infer(a, err);
  } else {
    err << "replay: unsupported subcommand " << sub << "\n";
    return false;
  }
  if (rc != 0) return false;
  for (auto it = m["artifacts"].begin(); it != m["artifacts"].end(); ++it) {
    const std::string got = crc32_of_file(scratch_dir + "/" + it.key());
    if (got != it.value().get<std::string>()) {
      err << "replay: checksum mismatch for " << it.key() << "\n";
      return false;
    }
  }
  return true;
}

}  // namespace dsrvae::cli
