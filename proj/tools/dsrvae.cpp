#include <CLI11.hpp>

#include "dsrvae/cli.hpp"

int main(int argc, char** argv) {
  using namespace dsrvae;
  CLI::App app{"unsupervised joint denoise + super-resolution toolkit"};
  app.require_subcommand(1);

  // degrade
  cli::DegradeArgs dg;
  auto* deg = app.add_subcommand("degrade", "apply blur/downsample/noise to a corpus");
  deg->add_option("--in", dg.in_dir, "input PNG directory")->required();
  deg->add_option("--out", dg.out_dir, "output directory")->required();
  deg->add_option("--blur-sigma", dg.spec.blur_sigma, "Gaussian blur sigma");
  deg->add_option("--scale", dg.spec.scale, "resize factor (e.g. 0.25)");
  deg->add_option("--noise-sigma", dg.spec.noise_sigma, "noise sigma in [0,1] units");
  deg->add_option("--seed", dg.spec.seed, "base seed (per-file seeds derive from it)");

  // train
  cli::TrainArgs tr;
  std::string cfg_path, phase_override;
  auto* trn = app.add_subcommand("train", "run a training phase");
  trn->add_option("--config", cfg_path, "JSON config file")->required();
  trn->add_option("--source", tr.source_dir, "source-domain PNG directory")->required();
  trn->add_option("--target", tr.target_dir, "reference PNG directory")->required();
  trn->add_option("--out", tr.out_dir, "output directory")->required();
  trn->add_option("--phase", phase_override, "dae | sr | joint (overrides config)");
  trn->add_option("--resume", tr.resume_path, "same-phase checkpoint to continue");
  trn->add_option("--init", tr.init_path, "prior-phase checkpoint (sr/joint)");

  // infer
  cli::InferArgs in;
  std::string mode = "denoise+sr";
  auto* inf = app.add_subcommand("infer", "run a checkpoint over a corpus");
  inf->add_option("--ckpt", in.ckpt_path, "checkpoint file")->required();
  inf->add_option("--in", in.in_dir, "input PNG directory")->required();
  inf->add_option("--out", in.out_dir, "output directory")->required();
  inf->add_option("--mode", mode, "denoise | sr | denoise+sr")
      ->check(CLI::IsMember({"denoise", "sr", "denoise+sr"}));

  // evaluate
  cli::EvaluateArgs ev;
  auto* evl = app.add_subcommand("evaluate", "PSNR/SSIM report for matched corpora");
  evl->add_option("--pred", ev.pred_dir, "predictions directory")->required();
  evl->add_option("--ref", ev.ref_dir, "references directory")->required();
  evl->add_option("--report", ev.report_path, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*deg) return cli::cmd_degrade(dg);
    if (*trn) {
      tr.config = cfgio::load_train_config(cfg_path);
      if (!phase_override.empty()) {
        if (phase_override == "dae")
          tr.config.phase = TrainPhase::dae;
        else if (phase_override == "sr")
          tr.config.phase = TrainPhase::sr;
        else if (phase_override == "joint")
          tr.config.phase = TrainPhase::joint;
        else
          throw std::invalid_argument("unknown phase: " + phase_override);
      }
      return cli::cmd_train(tr);
    }
    if (*inf) {
      in.mode = mode == "denoise" ? cli::InferMode::denoise
                : mode == "sr"    ? cli::InferMode::sr
                                  : cli::InferMode::denoise_sr;
      return cli::cmd_infer(in);
    }
    if (*evl) return cli::cmd_evaluate(ev);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
