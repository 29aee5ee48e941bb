// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/cli.hpp"

#include <cmath>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "daem/attribution.hpp"
#include "daem/metrics.hpp"
#include "daem/service.hpp"
#include "daem/stats.hpp"
#include "daem/tme.hpp"
#include "daem/trainer.hpp"

namespace daem {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation:
    case ErrorKind::kShape:
    case ErrorKind::kChecksum:
      return kExitValidation;
    case ErrorKind::kMissing:
      return kExitMissing;
    default:
      return kExitFailure;
  }
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "NA" : (v > 0 ? "inf" : "-inf");
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
}

Cohort select_split(const Cohort& cohort, const std::string& split,
                    const std::optional<FoldPlan>& plan, int fold) {
  if (split == "all") return cohort;
  require(plan.has_value(), ErrorKind::kValidation, "split '" + split + "' needs a fold plan");
  require(fold >= 0 && fold < plan->folds, ErrorKind::kValidation,
          "fold " + std::to_string(fold) + " outside plan with " + std::to_string(plan->folds) +
              " folds");
  Cohort out;
  for (const WsiBag& b : cohort) {
    const auto it = plan->assignment.find(b.wsi_id);
    if (it == plan->assignment.end()) continue;
    if ((split == "val") == (it->second == fold)) out.push_back(b);
  }
  return out;
}

std::optional<FoldPlan> plan_for(const Cohort& cohort, const std::string& plan_path,
                                 std::uint64_t seed) {
  if (!plan_path.empty()) return read_fold_plan(plan_path);
  if (cohort.empty()) return std::nullopt;
  return make_folds(cohort, seed);
}

fs::path data_or_env(const std::string& given) {
  if (!given.empty()) return given;
  const fs::path env = data_dir_from_env();
  require(!env.empty(), ErrorKind::kValidation, "no data directory: pass --data or set DAEM_DATA_DIR");
  return env;
}

Service* g_service = nullptr;
extern "C" void stop_service(int) {
  if (g_service) g_service->stop();
}

}  // namespace

std::string tme_group_tests_csv(const Cohort& cohort) {
  std::ostringstream os;
  os << "indicator,test,groups,statistic,df,p,note\n";
  if (cohort.empty()) return os.str();
  std::vector<std::vector<std::pair<std::string, std::optional<double>>>> rows;
  for (const WsiBag& b : cohort)
    rows.push_back(tme_indicators(compute_tme_metrics(b.cells, tissue_area_px2(b), b.mpp)));
  const std::size_t n_ind = rows.front().size();
  for (std::size_t k = 0; k < n_ind; ++k) {
    const std::string& name = rows.front()[k].first;
    // STAS vs non-STAS.
    std::vector<double> stas, non;
    for (std::size_t i = 0; i < cohort.size(); ++i)
      if (rows[i][k].second) (cohort[i].label == Label::kStas ? stas : non).push_back(*rows[i][k].second);
    if (stas.size() >= 2 && non.size() >= 2) {
      const TTestResult t = t_test_two_sided(stas, non);
      os << name << ",welch_t,STAS|non-STAS," << fmt(t.t) << ',' << fmt(t.df) << ',' << fmt(t.p)
         << ',' << (t.degenerate ? "degenerate" : "") << '\n';
    } else {
      os << name << ",welch_t,STAS|non-STAS,NA,NA,NA,too few values\n";
    }
    // Subtypes.
    std::vector<std::vector<double>> groups(3);
    for (std::size_t i = 0; i < cohort.size(); ++i)
      if (rows[i][k].second) groups[static_cast<std::size_t>(cohort[i].subtype)].push_back(*rows[i][k].second);
    if (std::all_of(groups.begin(), groups.end(), [](const auto& g) { return !g.empty(); })) {
      const KruskalResult kw = kruskal_wallis(groups);
      os << name << ",kruskal_wallis,n/a|micropapillary|non-micropapillary," << fmt(kw.h) << ','
         << fmt(kw.df) << ',' << fmt(kw.p) << ",\n";
      for (const DunnPair& d : dunn_posthoc(groups))
        os << name << ",dunn_bonferroni," << to_string(static_cast<Subtype>(d.a)) << '|'
           << to_string(static_cast<Subtype>(d.b)) << ',' << fmt(d.z) << ",NA,"
           << fmt(d.p_adjusted) << ",\n";
    }
    // Survival by median split.
    std::vector<double> values, times;
    std::vector<int> events;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < cohort.size(); ++i)
      if (rows[i][k].second && cohort[i].survival && cohort[i].survival->time_days > 0) {
        values.push_back(*rows[i][k].second);
        times.push_back(cohort[i].survival->time_days);
        events.push_back(cohort[i].survival->event ? 1 : 0);
        ids.push_back(cohort[i].wsi_id);
      }
    if (values.size() >= 2) {
      const MedianSplit split = stratify_by_median(values, ids);
      if (split.high_empty) {
        os << name << ",logrank_median,high|low,NA,1,NA,high group empty\n";
      } else {
        std::vector<int> group(values.size(), 0);
        for (std::size_t i : split.high_index) group[i] = 1;
        const LogRankResult lr = km_logrank(times, events, group);
        os << name << ",logrank_median,high|low," << fmt(lr.chi2) << ",1," << fmt(lr.p) << ','
           << (lr.degenerate ? "degenerate" : (lr.group_without_events ? "group without events" : ""))
           << '\n';
      }
    }
  }
  return os.str();
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"STAS prediction from whole-slide bags: training, evaluation, TME analytics"};
  app.require_subcommand(1);

  // ingest
  std::string ingest_dir;
  auto* ingest = app.add_subcommand("ingest", "Validate bags in a directory and index them");
  ingest->add_option("dir", ingest_dir, "Cohort directory")->required();

  // synth
  int synth_patients = 20;
  std::uint64_t synth_seed = 2026;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic cohort with a planted STAS signal");
  synth->add_option("--patients", synth_patients, "Number of patients")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // fold
  std::uint64_t fold_seed = 0;
  int fold_count = kDefaultFolds;
  std::string fold_data, fold_out;
  auto* fold = app.add_subcommand("fold", "Emit a patient-grouped fold plan");
  fold->add_option("--seed", fold_seed, "Shuffle seed")->required();
  fold->add_option("--data", fold_data, "Cohort directory (default $DAEM_DATA_DIR)");
  fold->add_option("--folds", fold_count, "Number of folds")->check(CLI::PositiveNumber);
  fold->add_option("--out", fold_out, "Plan file (default stdout)");

  // train
  int train_fold_index = 0;
  std::string train_config, train_data, train_plan, train_out;
  auto* train = app.add_subcommand("train", "Train one cross-validation fold");
  train->add_option("--fold", train_fold_index, "Validation fold index")->required();
  train->add_option("--config", train_config, "Training config JSON")->required();
  train->add_option("--data", train_data, "Cohort directory (default $DAEM_DATA_DIR)");
  train->add_option("--plan", train_plan, "Fold plan (default: make_folds with config seed)");
  train->add_option("--out", train_out, "Output directory")->required();

  // cv
  std::string cv_config, cv_data, cv_plan, cv_out;
  auto* cv = app.add_subcommand("cv", "Run every fold and summarise");
  cv->add_option("--config", cv_config, "Training config JSON")->required();
  cv->add_option("--data", cv_data, "Cohort directory (default $DAEM_DATA_DIR)");
  cv->add_option("--plan", cv_plan, "Fold plan (default: make_folds with config seed)");
  cv->add_option("--out", cv_out, "Output directory")->required();

  // predict
  std::string predict_ckpt, predict_bag;
  auto* pred = app.add_subcommand("predict", "Predict one bag");
  pred->add_option("--ckpt", predict_ckpt, "Model checkpoint")->required();
  pred->add_option("--bag", predict_bag, "Bag directory or manifest")->required();

  // eval
  std::string eval_ckpt, eval_data, eval_plan, eval_split = "val", eval_out;
  int eval_fold = 0;
  double eval_threshold = 0.5;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval->add_option("--ckpt", eval_ckpt, "Model checkpoint")->required();
  eval->add_option("--data", eval_data, "Cohort directory (default $DAEM_DATA_DIR)");
  eval->add_option("--split", eval_split, "val, train or all")
      ->check(CLI::IsMember({"val", "train", "all"}));
  eval->add_option("--plan", eval_plan, "Fold plan (default: make_folds with the checkpoint seed)");
  eval->add_option("--fold", eval_fold, "Fold index for val/train");
  eval->add_option("--threshold", eval_threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0));
  eval->add_option("--out", eval_out, "Report file (default stdout)");

  // heatmap
  std::string heat_ckpt, heat_bag, heat_scale = "20x", heat_out, heat_base = "blank";
  double heat_downsample = kThumbnailDownsample;
  auto* heat = app.add_subcommand("heatmap", "Render an attention heatmap and score sidecar");
  heat->add_option("--ckpt", heat_ckpt, "Model checkpoint")->required();
  heat->add_option("--bag", heat_bag, "Bag directory or manifest")->required();
  heat->add_option("--scale", heat_scale, "10x or 20x")->check(CLI::IsMember({"10x", "20x"}));
  heat->add_option("--downsample", heat_downsample, "Level-0 pixels per output pixel")
      ->check(CLI::PositiveNumber);
  heat->add_option("--base", heat_base, "blank or thumbnail")
      ->check(CLI::IsMember({"blank", "thumbnail"}));
  heat->add_option("--out", heat_out, "PNG path; the sidecar gets a .json extension")->required();

  // tme
  std::string tme_cohort, tme_out, tme_tests;
  auto* tme = app.add_subcommand("tme", "TME metrics table and group tests");
  tme->add_option("--cohort", tme_cohort, "Cohort directory")->required();
  tme->add_option("--out", tme_out, "Metrics CSV (default stdout)");
  tme->add_option("--tests", tme_tests, "Group-test CSV (default stdout)");

  // serve
  int serve_port = 8080;
  std::string serve_host = "127.0.0.1", serve_data, serve_ckpt;
  auto* serve = app.add_subcommand("serve", "Serve bags, heatmaps and measurements over HTTP");
  serve->add_option("--port", serve_port, "Port (0 = any free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--data", serve_data, "Cohort directory (default $DAEM_DATA_DIR)");
  serve->add_option("--ckpt", serve_ckpt, "Model checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  try {
    if (*ingest) {
      const Cohort cohort = load_cohort(ingest_dir);
      require(!cohort.empty(), ErrorKind::kValidation, "no bags found in " + ingest_dir);
      json index = json::array();
      std::size_t synthesized = 0;
      for (const WsiBag& b : cohort) {
        synthesized += ensure_thumbnail(b, fs::path(ingest_dir) / b.wsi_id) ? 1 : 0;
        index.push_back({{"id", b.wsi_id},
                         {"patient_id", b.patient_id},
                         {"section", to_string(b.section)},
                         {"label", to_string(b.label)},
                         {"subtype", to_string(b.subtype)},
                         {"small_patches", b.small.count()},
                         {"large_patches", b.large.count()},
                         {"cells", b.cells.size()}});
      }
      write_text(fs::path(ingest_dir) / "index.json", index.dump(2) + "\n");
      out << "ingested " << cohort.size() << " bags (" << synthesized
          << " thumbnails synthesized)\n";
    } else if (*synth) {
      SeededRng rng(synth_seed);
      const SyntheticCohort s = generate_synthetic_cohort(synth_patients, rng);
      write_cohort(s.bags, synth_out);
      for (const WsiBag& b : s.bags) ensure_thumbnail(b, fs::path(synth_out) / b.wsi_id);
      out << "wrote " << s.bags.size() << " bags to " << synth_out << "\n";
    } else if (*fold) {
      const FoldPlan plan = make_folds(load_cohort(data_or_env(fold_data)), fold_seed, fold_count);
      if (fold_out.empty())
        out << fold_plan_json(plan) << "\n";
      else
        write_fold_plan(plan, fold_out);
    } else if (*train) {
      const TrainConfig config = read_train_config(train_config);
      const Cohort cohort = load_cohort(data_or_env(train_data));
      const auto plan = plan_for(cohort, train_plan, config.seed);
      require(plan.has_value(), ErrorKind::kValidation, "empty cohort");
      const Cohort tr = select_split(cohort, "train", plan, train_fold_index);
      const Cohort va = select_split(cohort, "val", plan, train_fold_index);
      require(!tr.empty() && !va.empty(), ErrorKind::kValidation,
              "fold " + std::to_string(train_fold_index) + " has an empty train or val split");
      fs::create_directories(train_out);
      TrainOptions opts;
      opts.checkpoint_dir = train_out;
      opts.on_epoch = [&](const EpochLog& l) {
        out << "epoch " << l.epoch << " loss " << fmt(l.loss) << " train_acc "
            << fmt(l.train_accuracy) << " val_loss " << fmt(l.val_loss) << " val_acc "
            << fmt(l.val_accuracy) << (l.improved ? " *" : "") << "\n";
      };
      opts.on_event = [&](const std::string& m) { err << m << "\n"; };
      const TrainResult r = train_fold(tr, va, config, opts);
      write_text(fs::path(train_out) / "log.json", epoch_log_json(r.log) + "\n");
      out << "best epoch " << r.best.epoch << " val_loss " << fmt(r.best.val_loss) << "\n";
    } else if (*cv) {
      const TrainConfig config = read_train_config(cv_config);
      const Cohort cohort = load_cohort(data_or_env(cv_data));
      const auto plan = plan_for(cohort, cv_plan, config.seed);
      require(plan.has_value(), ErrorKind::kValidation, "empty cohort");
      TrainOptions opts;
      opts.on_event = [&](const std::string& m) { err << m << "\n"; };
      const CvResult r = run_cv(cohort, *plan, config, cv_out, opts);
      out << cv_summary_json(r) << "\n";
    } else if (*pred) {
      const ModelCheckpoint ckpt = load_model(predict_ckpt);
      const WsiBag bag = load_bag(predict_bag);
      const Prediction p = predict(build_bag_graphs(bag, ckpt.config.model.neighbors),
                                   ckpt.params, ckpt.config.model);
      const Label label = p.prob_stas >= 0.5 ? Label::kStas : Label::kNonStas;
      out << json{{"wsi_id", bag.wsi_id}, {"prob_stas", p.prob_stas}, {"label", to_string(label)}}
                 .dump()
          << "\n";
    } else if (*eval) {
      const ModelCheckpoint ckpt = load_model(eval_ckpt);
      const Cohort cohort = load_cohort(data_or_env(eval_data));
      std::optional<FoldPlan> plan;
      if (eval_split != "all") plan = plan_for(cohort, eval_plan, ckpt.config.seed);
      const Cohort split =
          cohort.empty() ? Cohort{} : select_split(cohort, eval_split, plan, eval_fold);
      require(!split.empty(), ErrorKind::kValidation, "split '" + eval_split + "' is empty");
      const std::vector<double> probs = predict_cohort(split, ckpt.params, ckpt.config.model);
      std::vector<int> labels;
      for (const WsiBag& b : split) labels.push_back(static_cast<int>(b.label));
      const std::string report = to_kv(threshold_report(probs, labels, eval_threshold));
      if (eval_out.empty())
        out << report;
      else
        write_text(eval_out, report);
    } else if (*heat) {
      const ModelCheckpoint ckpt = load_model(heat_ckpt);
      const fs::path bag_path = heat_bag;
      const WsiBag bag = load_bag(bag_path);
      const Attribution a = attribute(bag, ckpt.params, ckpt.config.model);
      const AttributionMap& map = map_for_scale(a, heat_scale);
      std::optional<Raster> base;
      if (heat_base == "thumbnail") {
        const fs::path dir = fs::is_directory(bag_path) ? bag_path : bag_path.parent_path();
        base = fs::exists(dir / kThumbnailName) ? read_png(dir / kThumbnailName)
                                                 : synthesize_thumbnail(bag);
        require(heat_downsample == kThumbnailDownsample, ErrorKind::kValidation,
                "--base thumbnail requires --downsample " + std::to_string(kThumbnailDownsample));
      }
      write_png(render_heatmap(map, base, heat_downsample), heat_out);
      fs::path sidecar = heat_out;
      sidecar.replace_extension(".json");
      write_text(sidecar, attribution_json(map, heat_downsample) + "\n");
      out << "wrote " << heat_out << " and " << sidecar.string() << "\n";
    } else if (*tme) {
      const Cohort cohort = load_cohort(tme_cohort);
      require(!cohort.empty(), ErrorKind::kValidation, "no bags found in " + tme_cohort);
      std::string table = tme_csv_header() + "\n";
      for (const WsiBag& b : cohort)
        table += tme_csv_row(b, compute_tme_metrics(b.cells, tissue_area_px2(b), b.mpp)) + "\n";
      const std::string tests = tme_group_tests_csv(cohort);
      if (tme_out.empty()) out << table;
      else write_text(tme_out, table);
      if (tme_tests.empty()) out << (tme_out.empty() ? "\n" : "") << tests;
      else write_text(tme_tests, tests);
    } else if (*serve) {
      ServiceOptions so;
      so.data_dir = data_or_env(serve_data);
      so.checkpoint = serve_ckpt;
      Service service(std::move(so));
      g_service = &service;
      std::signal(SIGINT, stop_service);
      std::signal(SIGTERM, stop_service);
      service.listen(serve_host, serve_port, [&](int port) {
        out << "serving " << service.bag_count() << " bags on http://" << serve_host << ":"
            << port << "\n"
            << std::flush;
      });
      g_service = nullptr;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace daem
