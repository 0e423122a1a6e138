// Command-line surface: dataset synthesis, training, evaluation, single-signal
// decomposition and SVG plots. Exit codes: 0 ok, 1 usage, 2 data/config,
// 3 numerical abort.

#include <CLI11.hpp>

#include <tsd/checkpoint.hpp>
#include <tsd/dataset_io.hpp>
#include <tsd/eval.hpp>
#include <tsd/presets.hpp>
#include <tsd/svg.hpp>
#include <tsd/training.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

using namespace tsd;

namespace {

// preset < config file < explicit flags
RunConfig assemble_config(const std::string& preset, const std::string& config_path,
                          const RunConfig& flags) {
  RunConfig rc;
  if (!preset.empty()) rc.merge(find_preset(preset).config);
  if (!config_path.empty()) rc.merge(RunConfig::parse_file(config_path));
  rc.merge(flags);
  return rc;
}

std::string split_path(const std::string& base, const std::string& tag) {
  const std::filesystem::path p(base);
  const std::string ext = p.extension().string();
  std::filesystem::path stem = p;
  stem.replace_extension();
  return stem.string() + "." + tag + ext;
}

void print_snr_summary(const std::vector<DecomposedSample>& samples) {
  double sum = 0, lo = HUGE_VAL, hi = -HUGE_VAL;
  for (const auto& s : samples) {
    const double snr = realized_snr_db((s.f - s.n).cast<double>(), s.n.cast<double>());
    sum += snr;
    lo = std::min(lo, snr);
    hi = std::max(hi, snr);
  }
  std::printf("realized SNR over %zu samples: mean %.3f dB, min %.3f dB, max %.3f dB\n",
              samples.size(), sum / double(samples.size()), lo, hi);
}

std::vector<double> read_signal_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open input signal '" + path + "'");
  std::vector<double> values;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    // tolerate trailing whitespace/CR and blank lines
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    if (line.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str() || *end != '\0')
      throw DataError("input signal line " + std::to_string(lineno) + " is not a number: '" +
                      line + "'");
    values.push_back(v);
  }
  return values;
}

bool is_sds1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  char magic[4] = {};
  is.read(magic, 4);
  return is && std::memcmp(magic, "SDS1", 4) == 0;
}

int run(int argc, char** argv) {
  CLI::App app{"additive decomposition of 1-D signals with a transformer encoder"};
  app.require_subcommand(1);

  // ------------------------------------------------------------------ gen
  auto* gen = app.add_subcommand("gen", "synthesize a decomposition dataset (SDS1)");
  std::string gen_out, gen_preset, gen_config, gen_blends, gen_sigma_rule = "sqrt_m";
  std::string gen_split, gen_export_csv;
  long gen_count = 13;
  int gen_m = 512, gen_workers = 1, gen_export_index = 0;
  double gen_snr = 20.0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output SDS1 path")->required();
  auto* gen_count_opt =
      gen->add_option("--count", gen_count, "number of samples")->capture_default_str();
  auto* gen_m_opt = gen->add_option("--m", gen_m, "signal length")->capture_default_str();
  auto* gen_snr_opt =
      gen->add_option("--snr", gen_snr, "target SNR in dB")->capture_default_str();
  auto* gen_seed_opt =
      gen->add_option("--seed", gen_seed, "master seed")->capture_default_str();
  auto* gen_blend_opt = gen->add_option(
      "--blend-list", gen_blends, "semicolon-separated blend rows, e.g. '1,0,0;1/3,2/3,0'");
  auto* gen_sigma_opt = gen->add_option("--sigma-rule", gen_sigma_rule,
                                        "noise calibration rule (sqrt_m|printed_m)")
                            ->capture_default_str();
  gen->add_option("--preset", gen_preset, "configuration preset (" + preset_names() + ")");
  gen->add_option("--config", gen_config, "key=value configuration file");
  gen->add_option("--workers", gen_workers, "generation worker threads")->capture_default_str();
  gen->add_option("--split", gen_split,
                  "write contiguous train,val,test files instead, e.g. '2000,500,500'");
  gen->add_option("--export-csv", gen_export_csv, "also export one sample as CSV");
  gen->add_option("--export-index", gen_export_index, "sample index for --export-csv")
      ->capture_default_str();

  gen->callback([&]() {
    RunConfig flags;
    if (gen_count_opt->count()) flags.set("count", std::to_string(gen_count));
    if (gen_m_opt->count()) flags.set("m", std::to_string(gen_m));
    if (gen_snr_opt->count()) flags.set("snr", std::to_string(gen_snr));
    if (gen_seed_opt->count()) flags.set("master_seed", std::to_string(gen_seed));
    if (gen_blend_opt->count()) flags.set("blend_list", gen_blends);
    if (gen_sigma_opt->count()) flags.set("sigma_rule", gen_sigma_rule);
    RunConfig rc = assemble_config(gen_preset, gen_config, flags);

    const long count = rc.get_int("count", 13);
    const int m = int(rc.get_int("m", 512));
    const double snr = rc.get_real("snr", 20.0);
    const auto seed = std::uint64_t(rc.get_int("master_seed", 0));
    const GenSpecs specs = rc.gen_specs();
    const auto blends = rc.blends();

    auto samples = gen_dataset(count, blends, specs, snr, m, seed, gen_workers);
    if (gen_split.empty()) {
      write_sds1(gen_out, DatasetHeader{1, std::uint32_t(m), std::uint64_t(count), seed, snr},
                 samples);
      std::printf("wrote %ld samples (m=%d) to %s\n", count, m, gen_out.c_str());
    } else {
      std::vector<long> parts;
      std::stringstream ss(gen_split);
      std::string cell;
      while (std::getline(ss, cell, ',')) parts.push_back(std::stol(cell));
      if (parts.size() != 3 || parts[0] + parts[1] + parts[2] != count)
        throw ConfigError("--split needs three counts summing to --count");
      const char* tags[3] = {"train", "val", "test"};
      std::size_t at = 0;
      for (int i = 0; i < 3; ++i) {
        std::vector<DecomposedSample> slice(samples.begin() + long(at),
                                            samples.begin() + long(at) + parts[std::size_t(i)]);
        const std::string path = split_path(gen_out, tags[i]);
        write_sds1(path,
                   DatasetHeader{1, std::uint32_t(m), std::uint64_t(parts[std::size_t(i)]), seed,
                                 snr},
                   slice);
        std::printf("wrote %ld samples to %s\n", parts[std::size_t(i)], path.c_str());
        at += std::size_t(parts[std::size_t(i)]);
      }
    }
    print_snr_summary(samples);
    if (!gen_export_csv.empty()) {
      if (gen_export_index < 0 || gen_export_index >= int(samples.size()))
        throw DataError("--export-index out of range [0, " + std::to_string(samples.size()) + ")");
      write_sample_csv(gen_export_csv, samples[std::size_t(gen_export_index)]);
      std::printf("exported sample %d to %s\n", gen_export_index, gen_export_csv.c_str());
    }
  });

  // ---------------------------------------------------------------- train
  auto* train_cmd = app.add_subcommand("train", "train a decomposition model");
  std::string tr_preset, tr_config, tr_data, tr_val, tr_ckpt = "model.tsdc",
              tr_log = "metrics.csv";
  std::string tr_adapter = "no_chunks", tr_sched = "constant";
  int tr_m = 512, tr_d = 512, tr_layers = 4, tr_heads = 8, tr_chunk = 1, tr_kernel = 3;
  int tr_batch = 64;
  long tr_epochs = 15000, tr_max_steps = 0;
  double tr_dropout = 0.1, tr_lr = 1e-4;
  std::uint64_t tr_seed = 0;
  bool tr_zero_init = false, tr_scale_dk = false;
  train_cmd->add_option("--preset", tr_preset, "configuration preset (" + preset_names() + ")");
  train_cmd->add_option("--config", tr_config, "key=value configuration file");
  train_cmd->add_option("--data", tr_data, "training SDS1 file");
  train_cmd->add_option("--val", tr_val, "validation SDS1 file");
  train_cmd->add_option("--out-ckpt", tr_ckpt, "best-checkpoint output path")
      ->capture_default_str();
  train_cmd->add_option("--log", tr_log, "metrics CSV output path")->capture_default_str();
  auto* o_m = train_cmd->add_option("--m", tr_m, "signal length M")->capture_default_str();
  auto* o_d = train_cmd->add_option("--d", tr_d, "token width D")->capture_default_str();
  auto* o_layers =
      train_cmd->add_option("--layers", tr_layers, "encoder layers N")->capture_default_str();
  auto* o_heads =
      train_cmd->add_option("--heads", tr_heads, "attention heads h")->capture_default_str();
  auto* o_chunk = train_cmd->add_option("--chunk-size", tr_chunk, "samples per token S")
                      ->capture_default_str();
  auto* o_adapter =
      train_cmd->add_option("--adapter", tr_adapter, "input adapter (no_chunks|sum|cat|conv)")
          ->capture_default_str();
  auto* o_dropout =
      train_cmd->add_option("--dropout", tr_dropout, "dropout probability p")
          ->capture_default_str();
  auto* o_zero = train_cmd->add_flag("--zero-init-head", tr_zero_init,
                                     "start the component head at exactly zero");
  auto* o_kernel = train_cmd->add_option("--output-kernel", tr_kernel, "output conv kernel size")
                       ->capture_default_str();
  auto* o_scale = train_cmd->add_flag("--scale-dk", tr_scale_dk,
                                      "scale attention by 1/sqrt(D/h) instead of 1/sqrt(D)");
  auto* o_lr = train_cmd->add_option("--lr", tr_lr, "learning rate")->capture_default_str();
  auto* o_batch =
      train_cmd->add_option("--batch-size", tr_batch, "mini-batch size")->capture_default_str();
  auto* o_epochs =
      train_cmd->add_option("--epochs", tr_epochs, "training epochs")->capture_default_str();
  auto* o_steps = train_cmd->add_option("--max-steps", tr_max_steps,
                                        "optional cap on optimizer steps (0 = none)")
                      ->capture_default_str();
  auto* o_sched =
      train_cmd->add_option("--scheduler", tr_sched, "lr schedule (constant|one_cycle)")
          ->capture_default_str();
  auto* o_seed = train_cmd->add_option("--seed", tr_seed, "training seed")->capture_default_str();

  train_cmd->callback([&]() {
    RunConfig flags;
    if (o_m->count()) flags.set("m", std::to_string(tr_m));
    if (o_d->count()) flags.set("d", std::to_string(tr_d));
    if (o_layers->count()) flags.set("layers", std::to_string(tr_layers));
    if (o_heads->count()) flags.set("heads", std::to_string(tr_heads));
    if (o_chunk->count()) flags.set("chunk_size", std::to_string(tr_chunk));
    if (o_adapter->count()) flags.set("adapter", tr_adapter);
    if (o_dropout->count()) flags.set("dropout", std::to_string(tr_dropout));
    if (o_zero->count()) flags.set("zero_init_head", "true");
    if (o_kernel->count()) flags.set("output_kernel", std::to_string(tr_kernel));
    if (o_scale->count()) flags.set("scale_dk", "true");
    if (o_lr->count()) flags.set("lr", std::to_string(tr_lr));
    if (o_batch->count()) flags.set("batch_size", std::to_string(tr_batch));
    if (o_epochs->count()) flags.set("epochs", std::to_string(tr_epochs));
    if (o_steps->count()) flags.set("max_steps", std::to_string(tr_max_steps));
    if (o_sched->count()) flags.set("scheduler", tr_sched);
    if (o_seed->count()) flags.set("seed", std::to_string(tr_seed));
    if (!tr_data.empty()) flags.set("data", tr_data);
    if (!tr_val.empty()) flags.set("val", tr_val);
    RunConfig rc = assemble_config(tr_preset, tr_config, flags);

    const std::string data_path = rc.get_str("data", "");
    const std::string val_path = rc.get_str("val", "");
    if (data_path.empty() || val_path.empty())
      throw UsageError("train: --data and --val are required (flags or config)");

    const ModelConfig mcfg = rc.model();
    const TrainConfig tcfg = rc.training();
    // both datasets must load cleanly before any output file is touched
    Dataset train_ds = read_sds1(data_path);
    Dataset val_ds = read_sds1(val_path);

    std::printf("training %s adapter, S=%d, D=%d, N=%d on %zu samples (val %zu)\n",
                adapter_name(mcfg.adapter).c_str(), mcfg.chunk_size, mcfg.token_dim,
                mcfg.num_layers, train_ds.samples.size(), val_ds.samples.size());
    TrainResult result =
        train<float>(mcfg, tcfg, train_ds.samples, val_ds.samples, tr_ckpt, tr_log);
    std::printf("done: %ld epochs, %ld steps; best validation rmse_avg %.6e at epoch %ld\n",
                result.epochs_run, result.steps, result.best_val_avg, result.best_epoch);
    std::printf("checkpoint: %s\nmetrics: %s\n", tr_ckpt.c_str(), tr_log.c_str());
  });

  // ----------------------------------------------------------------- eval
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_subset = "full", ev_csv;
  double ev_tau = kDefaultAbsenceTau;
  eval_cmd->add_option("--ckpt", ev_ckpt, "TSDC checkpoint")->required();
  eval_cmd->add_option("--data", ev_data, "SDS1 dataset")->required();
  eval_cmd->add_option("--subset", ev_subset, "evaluation subset (full|reduced13)")
      ->capture_default_str();
  eval_cmd->add_option("--tau", ev_tau, "absence threshold on prediction RMS")
      ->capture_default_str();
  eval_cmd->add_option("--csv", ev_csv, "also write the per-sample report as CSV");

  eval_cmd->callback([&]() {
    ModelParams<float> params = load_checkpoint(ev_ckpt);
    Dataset ds = read_sds1(ev_data);
    if (int(ds.header.m) != params.cfg.input_len)
      throw ConfigError("eval: dataset signal length " + std::to_string(ds.header.m) +
                        " does not match the checkpoint (" +
                        std::to_string(params.cfg.input_len) + ")");
    std::vector<int> subset;
    if (ev_subset == "full")
      subset = full_subset(ds.samples.size());
    else if (ev_subset == "reduced13")
      subset = reduced13_subset(ds.samples);
    else
      throw UsageError("eval: --subset must be full or reduced13");
    const ComponentReport report = evaluate(params, ds.samples, subset, ev_tau);
    std::fputs(report_table(report, ev_subset).c_str(), stdout);
    if (ev_subset == "reduced13") {
      for (const SampleScore& row : report.rows)
        std::printf("sample %5d blend (%.3f, %.3f, %.3f): rmse %9.3e %9.3e %9.3e %9.3e\n",
                    row.index, double(row.blend[0]), double(row.blend[1]), double(row.blend[2]),
                    row.rmse[0], row.rmse[1], row.rmse[2], row.rmse[3]);
    }
    if (!ev_csv.empty()) write_report_csv(ev_csv, report);
  });

  // ------------------------------------------------------------ decompose
  auto* dec = app.add_subcommand("decompose", "decompose one signal from CSV");
  std::string dc_ckpt, dc_in, dc_out;
  dec->add_option("--ckpt", dc_ckpt, "TSDC checkpoint")->required();
  dec->add_option("--input", dc_in, "input signal, one value per line")->required();
  dec->add_option("--out", dc_out, "output CSV (f,c_hat,s_hat,o_hat,n_hat)")->required();

  dec->callback([&]() {
    ModelParams<float> params = load_checkpoint(dc_ckpt);
    const std::vector<double> values = read_signal_csv(dc_in);
    if (int(values.size()) != params.cfg.input_len)
      throw DataError("decompose: signal has " + std::to_string(values.size()) +
                      " samples, the model expects " + std::to_string(params.cfg.input_len));
    VecX<float> f(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) f(Eigen::Index(i)) = float(values[i]);
    const auto comps = predict(params, f);
    std::ofstream os(dc_out, std::ios::trunc);
    if (!os) throw DataError("decompose: cannot open '" + dc_out + "'");
    os << "f,c_hat,s_hat,o_hat,n_hat\n";
    char line[192];
    for (int i = 0; i < f.size(); ++i) {
      std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g,%.9g,%.9g\n", double(f(i)),
                    double(comps[0](i)), double(comps[1](i)), double(comps[2](i)),
                    double(comps[3](i)));
      os << line;
    }
    if (!os) throw DataError("decompose: write to '" + dc_out + "' failed");
    std::printf("wrote decomposition to %s\n", dc_out.c_str());
  });

  // ----------------------------------------------------------------- plot
  auto* plot = app.add_subcommand("plot", "render a sample or decomposition as SVG");
  std::string pl_in, pl_out, pl_ckpt;
  int pl_index = 0;
  plot->add_option("--input", pl_in, "SDS1 dataset or decomposition CSV")->required();
  plot->add_option("--out", pl_out, "output SVG path")->required();
  plot->add_option("--index", pl_index, "sample index for datasets")->capture_default_str();
  plot->add_option("--ckpt", pl_ckpt, "overlay model predictions (datasets only)");

  plot->callback([&]() {
    std::vector<SvgPanel> panels;
    const char* names[5] = {"f", "c", "s", "o", "n"};
    const char* titles[5] = {"observation f", "cartoon c", "smooth s", "oscillatory o",
                             "noise n"};
    if (is_sds1(pl_in)) {
      Dataset ds = read_sds1(pl_in);
      if (pl_index < 0 || std::size_t(pl_index) >= ds.samples.size())
        throw DataError("plot: index " + std::to_string(pl_index) + " out of range [0, " +
                        std::to_string(ds.samples.size()) + ")");
      const DecomposedSample& smp = ds.samples[std::size_t(pl_index)];
      std::array<Eigen::VectorXf, 5> truth = {smp.f, smp.c, smp.s, smp.o, smp.n};
      std::array<std::vector<double>, 4> pred;
      bool have_pred = false;
      if (!pl_ckpt.empty()) {
        ModelParams<float> params = load_checkpoint(pl_ckpt);
        if (params.cfg.input_len != int(ds.header.m))
          throw ConfigError("plot: checkpoint input length does not match the dataset");
        auto comps = predict(params, VecX<float>(smp.f));
        for (int i = 0; i < 4; ++i) {
          pred[std::size_t(i)].assign(comps[std::size_t(i)].data(),
                                      comps[std::size_t(i)].data() + comps[std::size_t(i)].size());
        }
        have_pred = true;
      }
      for (int p = 0; p < 5; ++p) {
        SvgPanel panel;
        panel.id = names[p];
        panel.title = titles[p];
        SvgSeries gt;
        gt.label = "truth";
        gt.color = "black";
        gt.values.assign(truth[std::size_t(p)].data(),
                         truth[std::size_t(p)].data() + truth[std::size_t(p)].size());
        panel.series.push_back(std::move(gt));
        if (have_pred && p >= 1) {
          SvgSeries pr;
          pr.label = "prediction";
          pr.color = "#d62728";
          pr.values = pred[std::size_t(p - 1)];
          panel.series.push_back(std::move(pr));
        }
        panels.push_back(std::move(panel));
      }
    } else {
      // decomposition CSV from `decompose`
      std::ifstream is(pl_in);
      std::string header;
      std::getline(is, header);
      if (header.rfind("f,", 0) != 0)
        throw DataError("plot: '" + pl_in + "' is neither SDS1 nor a decomposition CSV");
      std::array<std::vector<double>, 5> cols;
      std::string line;
      int lineno = 1;
      while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        double v[5];
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3], &v[4]) !=
            5)
          throw DataError("plot: bad CSV row at line " + std::to_string(lineno));
        for (int i = 0; i < 5; ++i) cols[std::size_t(i)].push_back(v[i]);
      }
      for (int p = 0; p < 5; ++p) {
        SvgPanel panel;
        panel.id = names[p];
        panel.title = p == 0 ? titles[0] : std::string(titles[p]) + " (prediction)";
        SvgSeries s;
        s.label = p == 0 ? "signal" : "prediction";
        s.color = p == 0 ? "black" : "#d62728";
        s.values = cols[std::size_t(p)];
        panel.series.push_back(std::move(s));
        panels.push_back(std::move(panel));
      }
    }
    write_svg(pl_out, render_line_panels(panels));
    std::printf("wrote %s\n", pl_out.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {  // ConfigError, DataError, I/O
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
