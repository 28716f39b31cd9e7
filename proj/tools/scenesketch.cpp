// scenesketch: corpus generation, training, sampling, evaluation, rendering
// and the HTTP service. Exit status 0 ok, 1 runtime failure, 2 usage error.

#include <csignal>

#include "CLI11.hpp"
#include "scenesketch/cli/commands.hpp"
#include "scenesketch/service/http.hpp"

using namespace scenesketch;
using namespace scenesketch::cli;

namespace {

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text to sketched scene: layout composer and per-class object sketchers"};
  app.require_subcommand(1);

  GenCorpusOptions gen;
  auto* c_gen = app.add_subcommand("gen-corpus", "Write a synthetic layout or stroke corpus");
  c_gen->add_option("--kind", gen.kind, "layouts | strokes")->check(CLI::IsMember({"layouts", "strokes"}));
  c_gen->add_option("--out", gen.out, "Output .jsonl")->required();
  c_gen->add_option("--seed", gen.seed);
  c_gen->add_option("--per-relation", gen.per_relation, "Layouts per relation");
  c_gen->add_option("--family", gen.family, "tree | house | cloud | box");
  c_gen->add_option("--class", gen.class_label, "Class label (default: family)");
  c_gen->add_option("--count", gen.count, "Drawings");
  c_gen->add_option("--ratio-min", gen.ratio_lo);
  c_gen->add_option("--ratio-max", gen.ratio_hi);

  TrainOptions tc, ts;
  std::string tc_config, ts_config;
  auto add_train = [](CLI::App* c, TrainOptions& o, std::string& cfg) {
    c->add_option("--data", o.data, "Training corpus")->required();
    c->add_option("--out", o.out, "Checkpoint directory")->required();
    c->add_option("--preset", o.preset, "large | desk | tiny");
    c->add_option("--config", cfg, "JSON file merged over the preset");
    c->add_option("--set", o.overrides, "key=value override (repeatable)");
    c->add_option("--seed", o.seed);
    c->add_option("--log-every", o.log_every);
  };
  auto* c_tc = app.add_subcommand("train-composer", "Train the layout composer");
  add_train(c_tc, tc, tc_config);
  auto* c_ts = app.add_subcommand("train-sketcher", "Train one object sketcher");
  add_train(c_ts, ts, ts_config);
  c_ts->add_option("--class", ts.class_label, "Class this sketcher draws")->required();
  c_ts->add_option("--fallback", ts.fallback, "Registry fallback class");

  SampleOptions so;
  auto* c_sample = app.add_subcommand("sample", "Generate layouts and sketched scenes for a description");
  c_sample->add_option("--checkpoints", so.checkpoints)->required();
  c_sample->add_option("--desc", so.description)->required();
  c_sample->add_option("--out", so.out)->required();
  c_sample->add_option("--seed", so.seed);
  c_sample->add_option("--k", so.k, "Number of candidates");
  c_sample->add_option("--layout-temperature", so.layout_temperature);
  c_sample->add_option("--sketch-temperature", so.sketch_temperature);

  EvalOptions eo;
  std::string match = "same_class";
  auto* c_eval = app.add_subcommand("eval", "Overlap table against heuristic and random baselines");
  c_eval->add_option("--checkpoints", eo.checkpoints)->required();
  c_eval->add_option("--data", eo.data, "Ground-truth layout corpus")->required();
  c_eval->add_option("--out", eo.out)->required();
  c_eval->add_option("--prompt", eo.prompts, "Prompt (repeatable; default: the four desk prompts)");
  c_eval->add_option("--seed", eo.config.seed);
  c_eval->add_option("--layouts", eo.config.layouts_per_prompt);
  c_eval->add_option("--points", eo.config.points_per_box);
  c_eval->add_option("--temperature", eo.config.temperature);
  c_eval->add_option("--resolution", eo.config.heatmap_resolution);
  c_eval->add_option("--match", match)->check(CLI::IsMember({"same_class", "any_box"}));

  RenderOptions ro;
  std::uint64_t render_seed = 0;
  auto* c_render = app.add_subcommand("render", "Sketch a layout file into an SVG");
  c_render->add_option("--checkpoints", ro.checkpoints)->required();
  c_render->add_option("--layout", ro.layout)->required();
  c_render->add_option("--out", ro.out)->required();
  auto* render_seed_opt = c_render->add_option("--seed", render_seed, "Default: the layout's seed");
  c_render->add_option("--sketch-temperature", ro.sketch_temperature);

  std::string serve_dir, snapshot_dir;
  std::uint64_t serve_seed = 0;
  auto* c_serve = app.add_subcommand("serve", "HTTP JSON service (SCENESKETCH_BIND, SCENESKETCH_CHECKPOINT_DIR)");
  c_serve->add_option("--checkpoints", serve_dir, "Default: $SCENESKETCH_CHECKPOINT_DIR");
  c_serve->add_option("--snapshots", snapshot_dir, "Write session snapshots here");
  c_serve->add_option("--seed", serve_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_gen) {
      cmd_gen_corpus(gen);
    } else if (*c_tc) {
      if (!tc_config.empty()) tc.config_file = tc_config;
      cmd_train_composer(tc);
    } else if (*c_ts) {
      if (!ts_config.empty()) ts.config_file = ts_config;
      cmd_train_sketcher(ts);
    } else if (*c_sample) {
      cmd_sample(so);
    } else if (*c_eval) {
      eo.config.match = match == "any_box" ? OverlapMatch::kAnyBox : OverlapMatch::kSameClass;
      cmd_eval(eo);
    } else if (*c_render) {
      if (render_seed_opt->count()) ro.seed = render_seed;
      cmd_render(ro);
    } else if (*c_serve) {
      if (serve_dir.empty()) {
        const char* env = std::getenv("SCENESKETCH_CHECKPOINT_DIR");
        if (!env || !*env) throw UsageError("--checkpoints or SCENESKETCH_CHECKPOINT_DIR is required");
        serve_dir = env;
      }
      auto pipeline = std::make_shared<const Pipeline>(load_pipeline(serve_dir));
      std::optional<std::filesystem::path> snaps;
      if (!snapshot_dir.empty()) snaps = snapshot_dir;
      SessionStore store(pipeline, serve_seed, snaps);
      httplib::Server server;
      install_routes(server, store);
      const auto [host, port] = bind_address_from_env();
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cerr << "listening on " << host << ":" << port << "\n";
      if (!server.listen(host, port)) {
        std::cerr << "error: cannot bind " << host << ":" << port << "\n";
        return kExitRuntime;
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
