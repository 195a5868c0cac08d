// prunelab command-line surface: training, pruning, evaluation, reports.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "prunelab/checkpoint.hpp"
#include "prunelab/config.hpp"
#include "prunelab/corpus.hpp"
#include "prunelab/report.hpp"
#include "prunelab/textgen.hpp"
#include "prunelab/trainer.hpp"

namespace {

using namespace prunelab;

Trainer<float> build_trainer(const RunConfig& rc, const std::string& init_ckpt,
                             const std::string& arch_from) {
  TransformerModel<float> mdl;
  if (!init_ckpt.empty()) {
    mdl = load_checkpoint(init_ckpt).mdl;
  } else if (!arch_from.empty()) {
    const LoadedCheckpoint src = load_checkpoint(arch_from);
    Rng init_rng = Rng(rc.train.seed).split("init");
    mdl = init_model<float>(src.mdl.cfg, init_rng, static_cast<float>(rc.init_std),
                            &src.mdl.q_to_kv);
  } else {
    Rng init_rng = Rng(rc.train.seed).split("init");
    mdl = init_model<float>(rc.model_config(), init_rng, static_cast<float>(rc.init_std));
  }
  return make_trainer(std::move(mdl), rc.train);
}

void save_run(const Trainer<float>& t, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  CheckpointMeta meta;
  meta.rng_seed = t.data_rng.seed();
  meta.rng_state = t.data_rng.state();
  meta.step = t.gd_steps;
  meta.tokens = t.tokens;
  save_checkpoint(out_dir + "/model.ckpt", t.mdl, meta);
  if (!t.metrics.empty()) export_metrics_file(t.metrics, out_dir + "/metrics.csv");
  if (!t.trace.empty()) export_trace_file(t.trace, out_dir + "/trace.csv");
}

int cmd_train(const std::string& config_path, const std::string& corpus_path,
              const std::string& out_dir, const std::string& init_ckpt,
              const std::string& arch_from, bool prune, bool second_order) {
  RunConfig rc = load_config(config_path);
  apply_env_seed(rc);
  if (!prune) rc.train.target_params = 0;
  if (second_order) rc.train.second_order = true;
  if (prune && rc.train.target_params <= 0)
    fail(Errc::config_error, "key target_params must be positive for prune-pretrain");
  const Corpus corpus = load_corpus(corpus_path, rc.train_frac);
  Trainer<float> t = build_trainer(rc, init_ckpt, arch_from);
  const int n_seq = rc.train.sequences_per_batch();
  const int seq_len = rc.train.seq_len;
  run(t, [&](Rng& rng) { return sample_batch(corpus, rng, n_seq, seq_len); });
  save_run(t, out_dir);
  std::printf("steps=%lld tokens=%lld params=%lld prune_events=%zu\n",
              static_cast<long long>(t.gd_steps), static_cast<long long>(t.tokens),
              static_cast<long long>(parameter_count(t.mdl)), t.trace.size());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_path, int seq_len,
             const std::string& split, double train_frac) {
  const LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  const Corpus corpus = load_corpus(corpus_path, train_frac);
  if (split != "heldout" && split != "train")
    fail(Errc::config_error, "key split wants heldout|train, got '" + split + "'");
  const double ppl = evaluate_perplexity(lc.mdl, corpus, split == "heldout", seq_len);
  std::printf("perplexity=%.17g\n", ppl);
  return 0;
}

int cmd_report_arch(const std::string& ckpt_path, bool csv) {
  const LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  const std::vector<ArchRow> rows = {arch_row(lc.mdl)};
  std::fputs((csv ? render_arch_csv(rows) : render_arch_table(rows)).c_str(), stdout);
  return 0;
}

int cmd_export_trace(const std::string& run_dir, const std::string& out_path) {
  const auto rows = import_trace_file(run_dir + "/trace.csv");
  // re-emit through the exporter path so the output is freshly validated
  std::string body = std::string(kTraceHeader) + "\n";
  std::int64_t prev = -1;
  for (const auto& r : rows) {
    if (prev >= 0 && r.params >= prev)
      fail(Errc::config_error, "trace params not strictly decreasing");
    prev = r.params;
    body += std::to_string(r.step) + "," + std::to_string(r.tokens) + "," +
            detail::fmt_double(r.s_attn) + "," + detail::fmt_double(r.s_ffn) + "," +
            detail::fmt_double(r.s_stem) + "," + detail::csv_quote(r.chosen) + "," +
            std::to_string(r.m) + "," + detail::fmt_double(r.mean_h) + "," +
            detail::fmt_double(r.mean_n) + "," + std::to_string(r.params) + "\n";
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_failure, "cannot open trace file for writing: " + out_path);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.flush();
  if (!out) fail(Errc::io_failure, "write error on trace file: " + out_path);
  return 0;
}

int cmd_oneshot(const std::string& ckpt_path, const std::string& corpus_path,
                std::int64_t target, int calib_batches, const std::string& out_dir,
                const std::string& config_path, bool second_order) {
  RunConfig rc = config_path.empty() ? RunConfig{} : load_config(config_path);
  apply_env_seed(rc);
  rc.train.target_params = target;
  rc.train.prune_per_macro = 1;  // prune-only loop regardless of config ratio
  rc.train.gd_per_macro = 0;
  rc.train.second_order = second_order || rc.train.second_order;
  rc.train.accumulation = Accumulation::sum;  // plain average over calib batches
  rc.train.hessian_window = calib_batches;

  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  const Corpus corpus = load_corpus(corpus_path, rc.train_frac);
  Trainer<float> t = make_trainer(std::move(lc.mdl), rc.train);

  Rng calib_rng = Rng(rc.train.seed).split("calib");
  const int n_seq = rc.train.sequences_per_batch();
  for (int k = 0; k < calib_batches; ++k) {
    const Batch b = sample_batch(corpus, calib_rng, n_seq, rc.train.seq_len);
    const ForwardTape<float> tape = forward(t.mdl, b);
    const Weights<float> grads = backward(t.mdl, tape);
    accumulate(t.sal, t.mdl, grads);
    if (t.cfg.second_order) hessian_accumulate(t.hess, tape);
  }
  run(t, [&](Rng& rng) { return sample_batch(corpus, rng, n_seq, rc.train.seq_len); });
  save_run(t, out_dir);
  std::printf("params=%lld prune_events=%zu\n",
              static_cast<long long>(parameter_count(t.mdl)), t.trace.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pruning-aware pretraining for small decoder-only LMs"};
  app.require_subcommand(1);

  std::string config_path, corpus_path, out_dir, ckpt_path, init_ckpt, arch_from;
  std::string run_dir, out_path, split = "heldout";
  bool second_order = false, csv = false;
  int seq_len = 0, calib_batches = 8;
  std::int64_t target = 0, gen_bytes = 20 * 1000 * 1000;
  std::uint64_t gen_seed = 1;
  double train_frac = 0.98;

  auto* pre = app.add_subcommand("pretrain", "plain training, no pruning");
  pre->add_option("--config", config_path)->required();
  pre->add_option("--corpus", corpus_path)->required();
  pre->add_option("--out", out_dir)->required();
  pre->add_option("--init", init_ckpt, "start from this checkpoint's weights");
  pre->add_option("--arch-from", arch_from,
                  "fresh random init with this checkpoint's architecture");

  auto* pp = app.add_subcommand("prune-pretrain", "train while pruning to target_params");
  pp->add_option("--config", config_path)->required();
  pp->add_option("--corpus", corpus_path)->required();
  pp->add_option("--out", out_dir)->required();
  pp->add_option("--init", init_ckpt, "start from this checkpoint's weights");
  pp->add_flag("--second-order", second_order, "compensate surviving weights on prune");

  auto* ev = app.add_subcommand("eval", "held-out perplexity of a checkpoint");
  ev->add_option("--ckpt", ckpt_path)->required();
  ev->add_option("--corpus", corpus_path)->required();
  ev->add_option("--seq-len", seq_len, "window length (default: checkpoint max, capped 128)");
  ev->add_option("--split", split, "heldout|train");
  ev->add_option("--train-frac", train_frac, "positional split fraction");

  auto* ra = app.add_subcommand("report-arch", "architecture table for a checkpoint");
  ra->add_option("--ckpt", ckpt_path)->required();
  ra->add_flag("--csv", csv, "machine-readable output");

  auto* et = app.add_subcommand("export-trace", "validate and re-export a run's prune trace");
  et->add_option("--run", run_dir)->required();
  et->add_option("--out", out_path)->required();

  auto* os = app.add_subcommand("oneshot-prune", "post-training prune with calibration");
  os->add_option("--ckpt", ckpt_path)->required();
  os->add_option("--corpus", corpus_path)->required();
  os->add_option("--target", target, "parameter budget")->required();
  os->add_option("--calib-batches", calib_batches, "calibration batches");
  os->add_option("--out", out_dir)->required();
  os->add_option("--config", config_path, "optional run config for batch shape");
  os->add_flag("--second-order", second_order, "compensate surviving weights on prune");

  auto* gc = app.add_subcommand("gen-corpus", "deterministic synthetic text corpus");
  gc->add_option("--out", out_path)->required();
  gc->add_option("--bytes", gen_bytes, "corpus size in bytes");
  gc->add_option("--seed", gen_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed())
      return cmd_train(config_path, corpus_path, out_dir, init_ckpt, arch_from, false, false);
    if (pp->parsed())
      return cmd_train(config_path, corpus_path, out_dir, init_ckpt, "", true, second_order);
    if (ev->parsed()) return cmd_eval(ckpt_path, corpus_path, seq_len, split, train_frac);
    if (ra->parsed()) return cmd_report_arch(ckpt_path, csv);
    if (et->parsed()) return cmd_export_trace(run_dir, out_path);
    if (os->parsed())
      return cmd_oneshot(ckpt_path, corpus_path, target, calib_batches, out_dir, config_path,
                         second_order);
    if (gc->parsed()) {
      write_corpus_file(out_path, gen_seed, static_cast<std::size_t>(gen_bytes));
      std::printf("wrote %lld bytes\n", static_cast<long long>(gen_bytes));
      return 0;
    }
  } catch (const prunelab::Error& e) {
    std::fprintf(stderr, "prunelab-error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "prunelab-error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
