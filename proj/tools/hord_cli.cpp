#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hord/hord.h"

namespace {

int fail(hord_status status) {
  std::fprintf(stderr, "error: %s\n", hord_last_error());
  return static_cast<int>(status);
}

struct GenData {
  std::size_t ids = 20;
  std::size_t per_id = 8;
  double occlusion_rate = 0.5;
  std::uint64_t seed = 7;
  std::string out;
};

int gen_data(const GenData& opt) {
  hord_dataset* data = nullptr;
  if (auto s = hord_dataset_generate(opt.ids, opt.per_id, opt.occlusion_rate, opt.seed, &data)) {
    return fail(s);
  }
  const auto s = hord_dataset_save(data, opt.out.c_str());
  hord_dataset_free(data);
  return s ? fail(s) : 0;
}

struct Train {
  std::string data, config, out, loss_trace;
  std::vector<std::string> overrides;
  bool quiet = false;
};

int train(const Train& opt) {
  hord_config* config = nullptr;
  auto s = opt.config.empty() ? hord_config_new(&config)
                              : hord_config_load(opt.config.c_str(), &config);
  if (s) return fail(s);
  for (const auto& kv : opt.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      hord_config_free(config);
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      return HORD_ERR_USAGE;
    }
    s = hord_config_set(config, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (s) {
      hord_config_free(config);
      return fail(s);
    }
  }
  hord_dataset* data = nullptr;
  if ((s = hord_dataset_load(opt.data.c_str(), &data))) {
    hord_config_free(config);
    return fail(s);
  }
  hord_model* model = nullptr;
  auto progress = [](std::size_t epoch, double loss, void*) {
    std::fprintf(stderr, "epoch %zu loss %.6f\n", epoch, loss);
  };
  s = hord_train(data, config, opt.quiet ? nullptr : +progress, nullptr, &model);
  hord_dataset_free(data);
  hord_config_free(config);
  if (s) return fail(s);
  s = hord_model_save(model, opt.out.c_str());
  if (!s && !opt.loss_trace.empty()) s = hord_model_save_loss_trace(model, opt.loss_trace.c_str());
  hord_model_free(model);
  return s ? fail(s) : 0;
}

struct Eval {
  std::string model, data;
  double gamma = -1.0;
  std::size_t top_n = 0;
};

int eval(const Eval& opt) {
  hord_model* model = nullptr;
  hord_dataset* data = nullptr;
  if (auto s = hord_model_load(opt.model.c_str(), &model)) return fail(s);
  if (auto s = hord_dataset_load(opt.data.c_str(), &data)) {
    hord_model_free(model);
    return fail(s);
  }
  hord_metrics metrics{};
  auto s = hord_evaluate(model, data, opt.gamma, opt.top_n, &metrics);
  hord_dataset_free(data);
  hord_model_free(model);
  if (s) return fail(s);
  char* text = nullptr;
  if ((s = hord_metrics_format(&metrics, &text))) return fail(s);
  std::fputs(text, stdout);
  hord_string_free(text);
  return 0;
}

struct GradCheck {
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  bool verbose = false;
  double tolerance = 1e-4;
};

int gradcheck(const GradCheck& opt) {
  double worst = 0.0;
  char* report = nullptr;
  if (auto s = hord_gradcheck(opt.seed, opt.seeds, &worst, opt.verbose ? &report : nullptr)) {
    return fail(s);
  }
  if (report) {
    std::fputs(report, stdout);
    hord_string_free(report);
  }
  std::printf("max relative error\t%.3e\n", worst);
  if (!(worst < opt.tolerance)) {
    std::fprintf(stderr, "error: gradient check above tolerance %.1e\n", opt.tolerance);
    return HORD_ERR_NUMERICAL;
  }
  return 0;
}

int gm_demo(std::size_t keypoints, std::uint64_t seed) {
  char* report = nullptr;
  if (auto s = hord_gm_demo(keypoints, seed, &report)) return fail(s);
  std::fputs(report, stdout);
  hord_string_free(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occlusion-robust re-identification on synthetic keypoint data"};
  app.require_subcommand(1);

  GenData g;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset container");
  gen->add_option("--ids", g.ids, "Identities")->capture_default_str();
  gen->add_option("--per-id", g.per_id, "Samples per identity")->capture_default_str();
  gen->add_option("--occlusion-rate", g.occlusion_rate, "Fraction of occluded samples")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", g.seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", g.out, "Output path")->required();

  Train t;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", t.data, "Dataset container")->required();
  tr->add_option("--config", t.config, "key=value config file");
  tr->add_option("--set", t.overrides, "Config override key=value (repeatable)");
  tr->add_option("--out", t.out, "Checkpoint path")->required();
  tr->add_option("--loss-trace", t.loss_trace, "CSV of per-epoch mean loss");
  tr->add_flag("--quiet", t.quiet, "No per-epoch progress");

  Eval e;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  ev->add_option("--model", e.model, "Checkpoint")->required();
  ev->add_option("--data", e.data, "Dataset container")->required();
  ev->add_option("--gamma", e.gamma, "Score mix weight (default: checkpoint config)")
      ->check(CLI::Range(0.0, 1.0));
  ev->add_option("--top-n", e.top_n, "Re-ranked candidates (default: checkpoint config)")
      ->check(CLI::PositiveNumber);

  GradCheck c;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--seed", c.seed, "First seed")->capture_default_str();
  gc->add_option("--seeds", c.seeds, "Number of seeds")->capture_default_str()->check(
      CLI::PositiveNumber);
  gc->add_option("--tolerance", c.tolerance, "Pass threshold")->capture_default_str();
  gc->add_flag("--verbose", c.verbose, "Print every check");

  std::size_t demo_k = 4;
  std::uint64_t demo_seed = 0;
  auto* gm = app.add_subcommand("gm-demo", "Graph matching on a toy pair");
  gm->add_option("--keypoints", demo_k, "Nodes per graph (1..4)")->capture_default_str();
  gm->add_option("--seed", demo_seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return HORD_ERR_USAGE;
  }

  if (gen->parsed()) return gen_data(g);
  if (tr->parsed()) return train(t);
  if (ev->parsed()) return eval(e);
  if (gc->parsed()) return gradcheck(c);
  return gm_demo(demo_k, demo_seed);
}
