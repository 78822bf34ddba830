#include "dsfnet/config.hpp"
#include "dsfnet/metrics.hpp"
#include "dsfnet/netpbm.hpp"
#include "dsfnet/synth.hpp"
#include "dsfnet/trainer.hpp"
#include "dsfnet/verify.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

int run_train(const std::string& config_path) {
  const auto cfg = dsf::load_run_config(config_path);
  const auto t0 = std::chrono::steady_clock::now();
  const auto summary = dsf::train(cfg, &std::cout);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!summary.trace.empty())
    std::cout << "first loss " << summary.trace.front().loss << ", last loss " << summary.trace.back().loss
              << ", best " << summary.best_loss << " at iteration " << summary.best_iteration << '\n';
  std::cout << "trace " << (cfg.output_dir / cfg.trace_file).string() << "\nfinal " << summary.final_checkpoint.string()
            << "\nbest " << summary.best_checkpoint.string() << "\n" << secs << " s\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& report, const std::string& pr_path,
             double threshold, double beta_sq) {
  const auto model = dsf::model_from_checkpoint<float>(dsf::load_checkpoint(ckpt));
  const auto samples = dsf::load_dataset(data);
  const auto thresholds = dsf::default_thresholds();
  std::vector<dsf::ImageMetrics> rows;
  std::vector<dsf::PrecisionRecall> mean_pr(thresholds.size());
  for (const auto& s : samples) {
    const auto saliency = dsf::to_map(dsf::predict(model, s.image));
    const auto truth = dsf::to_map(s.mask);
    rows.push_back(dsf::evaluate_image(s.id, saliency, truth, threshold, beta_sq));
    const auto pr = dsf::pr_curve(saliency, truth, thresholds);
    for (std::size_t i = 0; i < pr.size(); ++i) {
      mean_pr[i].precision += pr[i].precision / static_cast<double>(samples.size());
      mean_pr[i].recall += pr[i].recall / static_cast<double>(samples.size());
    }
  }
  std::ostringstream text;
  dsf::write_report(text, rows);
  std::ofstream out(report);
  if (!out) throw std::runtime_error("cannot write " + report);
  out << text.str();
  const std::string all = text.str();
  std::cout << all.substr(all.rfind("AGGREGATE"));
  if (!pr_path.empty()) {
    std::ofstream pr(pr_path);
    if (!pr) throw std::runtime_error("cannot write " + pr_path);
    dsf::write_pr_csv(pr, thresholds, mean_pr);
  }
  return 0;
}

int run_infer(const std::string& ckpt, const std::string& image, const std::string& out, bool binary) {
  const auto model = dsf::model_from_checkpoint<float>(dsf::load_checkpoint(ckpt));
  const auto img = dsf::load_image(image);
  if (img.dim(0) != 3) throw std::runtime_error(image + ": expected a color (P6) image");
  const auto map = dsf::predict(model, img);
  if (binary)
    dsf::save_mask(map, out);
  else
    dsf::save_image(map, out);
  return 0;
}

int run_synth(int count, dsf::Index extent, std::uint64_t seed, const std::string& difficulty, const std::string& out) {
  const auto samples = dsf::synth_generate(count, extent, seed, dsf::parse_difficulty(difficulty));
  dsf::save_dataset(samples, out);
  std::cout << "wrote " << samples.size() << " samples to " << out << '\n';
  return 0;
}

int run_checks(const dsf::VerifyOptions& opts) {
  const auto results = dsf::run_verify(opts);
  dsf::print_results(std::cout, results);
  return dsf::all_passed(results) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DSF-Net saliency segmentation: training, evaluation and self-checks"};
  app.require_subcommand(1);

  std::string config;
  auto* train = app.add_subcommand("train", "train a network from a config file");
  train->add_option("--config", config, "INI run configuration")->required()->check(CLI::ExistingFile);

  std::string ckpt, data, report, pr;
  double threshold = dsf::kDefaultThreshold, beta_sq = dsf::kDefaultBetaSq;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "directory of sample_XXXX.ppm / sample_XXXX_mask.pgm")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--report", report, "metrics report output")->required();
  eval->add_option("--pr", pr, "mean precision-recall curve CSV output");
  eval->add_option("--threshold", threshold, "binarization threshold")->check(CLI::Range(0.0, 1.0));
  eval->add_option("--beta-sq", beta_sq, "F-measure beta^2")->check(CLI::PositiveNumber);

  std::string image, out;
  bool binary = false;
  auto* infer = app.add_subcommand("infer", "saliency map for one image");
  infer->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--image", image, "input P6 image")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", out, "output P5 map")->required();
  infer->add_flag("--binary", binary, "write a {0,255} mask thresholded at 0.5");

  int count = 8;
  dsf::Index extent = 64;
  std::uint64_t seed = 0;
  std::string difficulty = "easy";
  auto* synth = app.add_subcommand("synth", "generate a synthetic lesion dataset");
  synth->add_option("--count", count, "number of samples")->required()->check(CLI::NonNegativeNumber);
  synth->add_option("--extent", extent, "image side, >= 32 and divisible by 8")->required();
  synth->add_option("--seed", seed, "root seed")->required();
  synth->add_option("--difficulty", difficulty, "easy, low-contrast, multi-lesion or hairy")->required();
  synth->add_option("--out", out, "output directory")->required();

  dsf::VerifyOptions vopts;
  auto* verify = app.add_subcommand("verify", "run the oracle suite");
  verify->add_option("--seeds", vopts.gradient_seeds, "gradient-check seeds")->check(CLI::PositiveNumber);
  verify->add_option("--inject-dilation-offset", vopts.dilation_offset,
                     "add this to every branch dilation before the receptive-field check");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(config);
    if (*eval) return run_eval(ckpt, data, report, pr, threshold, beta_sq);
    if (*infer) return run_infer(ckpt, image, out, binary);
    if (*synth) return run_synth(count, extent, seed, difficulty, out);
    if (*verify) return run_checks(vopts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
