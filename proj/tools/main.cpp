// deepmot CLI: dataset generation, DHN training/evaluation, the size study,
// toy-tracker training and inference, CLEAR-MOT evaluation, gradient dumps,
// and an embedded oracle selftest. Every run writes a run.meta with the
// resolved configuration (no timestamps, so reruns are byte-identical).

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "deepmot/common.hpp"
#include "deepmot/datasets.hpp"
#include "deepmot/dhn.hpp"
#include "deepmot/loss.hpp"
#include "deepmot/moteval.hpp"
#include "deepmot/rng.hpp"
#include "deepmot/toytracker.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace deepmot;

namespace {

constexpr const char* kVersion = "deepmot 1.0.0";

void write_meta(const CLI::App* sub, const std::string& path) {
  std::ofstream os(path);
  if (!os) detail::fail_runtime(detail::cat("cannot write ", path));
  os << "version=" << kVersion << "\n";
  os << "command=" << sub->get_name() << "\n";
  std::map<std::string, std::string> kv;
  for (const CLI::Option* opt : sub->get_options()) {
    std::string name = opt->get_name(false, true);
    if (name.rfind("--", 0) == 0) name = name.substr(2);
    if (name.empty() || name == "help") continue;
    std::string value;
    if (!opt->results().empty()) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    kv[name] = value;
  }
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
}

void add_config_and_meta(CLI::App* sub, std::string* meta_path) {
  sub->add_option("--meta", *meta_path, "where to write the resolved run config")
      ->capture_default_str();
}

Precision parse_precision(const std::string& s) {
  if (s == "f64") return Precision::f64;
  if (s == "f32") return Precision::f32;
  detail::fail_invalid("precision must be f64 or f32");
}

PairMode parse_pair_mode(const std::string& s) {
  if (s == "uniform") return PairMode::uniform;
  if (s == "tracking") return PairMode::tracking_like;
  if (s == "mixed") return PairMode::mixed;
  detail::fail_invalid("mode must be uniform, tracking or mixed");
}

std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stoul(item));
  return out;
}

std::vector<Scene> load_scene_dir(const std::string& dir) {
  std::vector<Scene> scenes;
  std::vector<std::string> gt_files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("gt_", 0) == 0) gt_files.push_back(e.path().string());
  }
  std::sort(gt_files.begin(), gt_files.end());
  for (const auto& gt_path : gt_files) {
    std::string det_path = gt_path;
    const auto pos = det_path.rfind("gt_");
    det_path.replace(pos, 3, "det_");
    if (!fs::exists(det_path))
      detail::fail_runtime(detail::cat("missing detections for ", gt_path));
    Scene s;
    s.gt = load_motchallenge(gt_path, MotKind::gt);
    s.detections = load_motchallenge(det_path, MotKind::det, s.gt.dims);
    scenes.push_back(std::move(s));
  }
  if (scenes.empty()) detail::fail_runtime(detail::cat("no gt_*.txt files in ", dir));
  return scenes;
}

void write_curves_csv(const std::string& path, const TrainCurves& curves) {
  std::ofstream os(path);
  if (!os) detail::fail_runtime(detail::cat("cannot write ", path));
  os << "epoch,train_loss,test_wa\n";
  for (std::size_t i = 0; i < curves.train_loss.size(); ++i)
    os << (i + 1) << ',' << curves.train_loss[i] << ',' << curves.test_wa[i] << "\n";
}

int run_selftest(std::size_t trials);

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale differentiable multi-object-tracking toolkit"};
  app.require_subcommand(1);
  // Flat key=value config file; keys are <subcommand>.<flag>. Command-line
  // flags win over config values; unknown keys are rejected.
  app.set_config("--config", "",
                 "flat key=value defaults, keys <subcommand>.<flag>; flags win");
  app.allow_config_extras(false);
  std::function<int()> action;

  // ---- gen-pairs ----------------------------------------------------------
  {
    auto* sub = app.add_subcommand("gen-pairs",
                                   "generate distance-matrix/assignment pairs");
    auto opts = std::make_shared<std::tuple<std::string, std::size_t, std::size_t,
                                            std::size_t, std::string, std::uint64_t,
                                            std::string>>();
    auto& [out, count, min_size, max_size, mode, seed, meta] = *opts;
    count = 20000;
    min_size = 2;
    max_size = 12;
    mode = "mixed";
    seed = 1;
    meta = "run.meta";
    sub->add_option("--out", out, "output pair file")->required();
    sub->add_option("--count", count, "number of pairs")->capture_default_str();
    sub->add_option("--min-size", min_size, "minimum matrix side")->capture_default_str();
    sub->add_option("--max-size", max_size, "maximum matrix side")->capture_default_str();
    sub->add_option("--mode", mode, "uniform | tracking | mixed")->capture_default_str();
    sub->add_option("--seed", seed, "random seed")->capture_default_str();
    add_config_and_meta(sub, &meta);
    sub->callback([sub, opts, &action] {
      action = [sub, opts] {
        auto& [out, count, min_size, max_size, mode, seed, meta] = *opts;
        auto pairs = gen_matrix_pairs(count, min_size, max_size,
                                      parse_pair_mode(mode), seed);
        save_pairs(out, pairs);
        write_meta(sub, meta);
        std::printf("wrote %zu pairs to %s\n", pairs.size(), out.c_str());
        return 0;
      };
    });
  }

  // ---- train-dhn ----------------------------------------------------------
  {
    auto* sub = app.add_subcommand("train-dhn", "train a DHN on matrix pairs");
    struct Opts {
      std::string train, test, variant = "seq_gru", head = "64,32,1";
      std::string out = "dhn.ntf1", curves, precision = "f64", meta = "run.meta";
      std::size_t hidden = 64, epochs = 20, decay_every = 20000;
      double lr = 0.0003, decay = 0.95, gamma = 2.0, wa_stop = 0.0;
      std::uint64_t seed = 7;
    };
    auto opts = std::make_shared<Opts>();
    sub->add_option("--train", opts->train, "training pair file")->required();
    sub->add_option("--test", opts->test, "test pair file (for WA curves)");
    sub->add_option("--variant", opts->variant,
                    "seq_gru | seq_lstm | paral_gru | paral_lstm | conv1d")
        ->capture_default_str();
    sub->add_option("--hidden", opts->hidden, "Bi-RNN hidden size")->capture_default_str();
    sub->add_option("--head", opts->head, "output head widths")->capture_default_str();
    sub->add_option("--epochs", opts->epochs, "maximum epochs")->capture_default_str();
    sub->add_option("--lr", opts->lr, "RMSprop learning rate")->capture_default_str();
    sub->add_option("--decay", opts->decay, "LR decay factor")->capture_default_str();
    sub->add_option("--decay-every", opts->decay_every, "iterations per decay")
        ->capture_default_str();
    sub->add_option("--gamma", opts->gamma, "focal modulating factor")->capture_default_str();
    sub->add_option("--seed", opts->seed, "random seed")->capture_default_str();
    sub->add_option("--wa-stop", opts->wa_stop,
                    "freeze once test WA reaches this value (0 = off)")
        ->capture_default_str();
    sub->add_option("--precision", opts->precision, "f64 | f32")->capture_default_str();
    sub->add_option("--out", opts->out, "output checkpoint")->capture_default_str();
    sub->add_option("--curves", opts->curves, "per-epoch loss/WA csv");
    add_config_and_meta(sub, &opts->meta);
    sub->callback([sub, opts, &action] {
      action = [sub, opts] {
        auto train = load_pairs(opts->train);
        std::vector<MatrixPair> test;
        if (!opts->test.empty()) test = load_pairs(opts->test);
        DhnConfig cfg;
        cfg.variant = variant_from_name(opts->variant);
        cfg.hidden = opts->hidden;
        cfg.head_widths = parse_widths(opts->head);
        TrainConfig tcfg;
        tcfg.lr = opts->lr;
        tcfg.decay_factor = opts->decay;
        tcfg.decay_every = opts->decay_every;
        tcfg.epochs = opts->epochs;
        tcfg.seed = opts->seed;
        tcfg.focal_gamma = opts->gamma;
        tcfg.wa_stop = opts->wa_stop;
        tcfg.precision = parse_precision(opts->precision);
        TrainCurves curves;
        DhnParams params = train_dhn(train, test, cfg, tcfg, &curves,
                                     [](std::size_t epoch, double loss, double wa) {
                                       std::printf("epoch %zu loss %.6f test WA %.4f\n",
                                                   epoch, loss, wa);
                                       std::fflush(stdout);
                                     });
        save_dhn(params, opts->out);
        if (!opts->curves.empty()) write_curves_csv(opts->curves, curves);
        write_meta(sub, opts->meta);
        if (curves.aborted_non_finite)
          std::printf("warning: divergence, saved the last finite checkpoint\n");
        std::printf("saved %s after %zu iterations\n", opts->out.c_str(),
                    curves.iterations);
        return 0;
      };
    });
  }

  // ---- eval-dhn -----------------------------------------------------------
  {
    auto* sub = app.add_subcommand("eval-dhn", "report WA/MA/SA on a pair file");
    struct Opts {
      std::string model, data, meta = "run.meta";
      bool echo_labels = false;
      std::size_t threads = 2;
    };
    auto opts = std::make_shared<Opts>();
    sub->add_option("--model", opts->model, "DHN checkpoint");
    sub->add_option("--data", opts->data, "pair file")->required();
    sub->add_flag("--echo-labels", opts->echo_labels,
                  "bypass the network and echo the labels (sanity stub)");
    sub->add_option("--threads", opts->threads, "evaluation threads")->capture_default_str();
    add_config_and_meta(sub, &opts->meta);
    sub->callback([sub, opts, &action] {
      action = [sub, opts] {
        auto data = load_pairs(opts->data);
        DhnEvalResult row, col;
        if (opts->echo_labels) {
          DhnEvalCounts cr, cc;
          for (const auto& p : data) {
            cr.add(p.a_star, p.a_star, DiscretizeMode::row);
            cc.add(p.a_star, p.a_star, DiscretizeMode::column);
          }
          row = cr.result();
          col = cc.result();
        } else {
          if (opts->model.empty())
            detail::fail_invalid("--model is required unless --echo-labels is set");
          DhnParams params = load_dhn(opts->model);
          row = eval_dhn(params, data, DiscretizeMode::row, opts->threads);
          col = eval_dhn(params, data, DiscretizeMode::column, opts->threads);
        }
        std::printf("row-wise maximum:    WA %.4f  MA%% %.2f  SA%% %.2f\n", row.wa,
                    row.ma_pct, row.sa_pct);
        std::printf("column-wise maximum: WA %.4f  MA%% %.2f  SA%% %.2f\n", col.wa,
                    col.ma_pct, col.sa_pct);
        write_meta(sub, opts->meta);
        return 0;
      };
    });
  }

  // ---- size-study ---------------------------------------------------------
  {
    auto* sub = app.add_subcommand("size-study", "WA vs matrix size csv");
    struct Opts {
      std::string model, out = "size_study.csv", meta = "run.meta";
      std::size_t min = 2, max = 300, per_size = 10, threads = 2;
      std::uint64_t seed = 1;
    };
    auto opts = std::make_shared<Opts>();
    sub->add_option("--model", opts->model, "DHN checkpoint")->required();
    sub->add_option("--out", opts->out, "output csv (size,wa rows)")->capture_default_str();
    sub->add_option("--min", opts->min, "smallest square size")->capture_default_str();
    sub->add_option("--max", opts->max, "largest square size")->capture_default_str();
    sub->add_option("--per-size", opts->per_size, "matrices per size")->capture_default_str();
    sub->add_option("--seed", opts->seed, "random seed")->capture_default_str();
    sub->add_option("--threads", opts->threads, "worker threads")->capture_default_str();
    add_config_and_meta(sub, &opts->meta);
    sub->callback([sub, opts, &action] {
      action = [sub, opts] {
        DhnParams params = load_dhn(opts->model);
        auto rows = size_study(params, opts->min, opts->max, opts->per_size,
                               opts->seed, opts->threads);
        write_size_study_csv(opts->out, rows);
        write_meta(sub, opts->meta);
        std::printf("wrote %zu rows to %s\n", rows.size(), opts->out.c_str());
        return 0;
      };
    });
  }

  // ---- gen-scenes ---------------------------------------------------------
  {
    auto* sub = app.add_subcommand("gen-scenes", "synthetic tracking sequences");
    struct Opts {
      std::string out_dir = "scenes", meta = "run.meta";
      std::size_t count = 20, length = 30, min_objects = 3, max_objects = 8;
      double min_velocity = 2.0, max_velocity = 10.0;
      double scale_min = 0.8, scale_max = 1.2, offset_max = 0.25;
      double drop = 0.05, clutter = 0.2, width = 640, height = 480;
      std::uint64_t seed = 1;
    };
    auto opts = std::make_shared<Opts>();
    sub->add_option("--out-dir", opts->out_dir, "output directory")->capture_default_str();
    sub->add_option("--count", opts->count, "number of scenes")->capture_default_str();
    sub->add_option("--length", opts->length, "frames per scene")->capture_default_str();
    sub->add_option("--min-objects", opts->min_objects)->capture_default_str();
    sub->add_option("--max-objects", opts->max_objects)->capture_default_str();
    sub->add_option("--min-velocity", opts->min_velocity)->capture_default_str();
    sub->add_option("--max-velocity", opts->max_velocity)->capture_default_str();
    sub->add_option("--scale-min", opts->scale_min, "detection rescale lower bound")
        ->capture_default_str();
    sub->add_option("--scale-max", opts->scale_max, "detection rescale upper bound")
        ->capture_default_str();
    sub->add_option("--offset-max", opts->offset_max,
                    "detection offset bound, fraction of box size")
        ->capture_default_str();
    sub->add_option("--drop", opts->drop, "detection drop probability")->capture_default_str();
    sub->add_option("--clutter", opts->clutter, "false detections per frame")
        ->capture_default_str();
    sub->add_option("--width", opts->width, "frame width")->capture_default_str();
    sub->add_option("--height", opts->height, "frame height")->capture_default_str();
    sub->add_option("--seed", opts->seed, "random seed")->capture_default_str();
    add_config_and_meta(sub, &opts->meta);
    sub->callback([sub, opts, &action] {
      action = [sub, opts] {
        fs::create_directories(opts->out_dir);
        for (std::size_t i = 0; i < opts->count; ++i) {
          SyntheticSceneConfig cfg;
          cfg.dims = {opts->width, opts->height};
          cfg.min_objects = opts->min_objects;
          cfg.max_objects = opts->max_objects;
          cfg.min_velocity = opts->min_velocity;
          cfg.max_velocity = opts->max_velocity;
          cfg.det_scale_min = opts->scale_min;
          cfg.det_scale_max = opts->scale_max;
          cfg.det_offset_max = opts->offset_max;
          cfg.drop_prob = opts->drop;
          cfg.clutter_rate = opts->clutter;
          cfg.length = opts->length;
          cfg.seed = opts->seed + i;
          Scene s = gen_synthetic_sequence(cfg);
          char name[64];
          std::snprintf(name, sizeof(name), "gt_%03zu.txt", i);
          save_motchallenge(s.gt, (fs::path(opts->out_dir) / name).string());
          std::snprintf(name, sizeof(name), "det_%03zu.txt", i);
          save_motchallenge(s.detections, (fs::path(opts->out_dir) / name).string());
        }
        write_meta(sub, opts->meta);
        std::printf("wrote %zu scenes to %s\n", opts->count, opts->out_dir.c_str());
        return 0;
      };
    });
  }

  // ---- train-tracker ------------------------------------------------------
  {
    auto* sub = app.add_subcommand("train-tracker",
                                   "train the toy tracker with the DeepMOT loss");
    struct Opts {
      std::string scenes_dir, dhn, out = "tracker.ntf1", curves, meta = "run.meta";
      std::string precision = "f64";
      std::size_t steps = 4000, hidden = 32;
      double lr = 0.0001, delta = 0.5, lambda = 5.0, gamma = 2.0, tau_tp = 0.5;
      double init_scale = 0.001;
      std::uint64_t seed = 5;
    };
    auto opts = std::make_shared<Opts>();
    sub->add_option("--scenes-dir", opts->scenes_dir, "directory of gt_/det_ files")
        ->required();
    sub->add_option("--dhn", opts->dhn, "frozen DHN checkpoint")->required();
    sub->add_option("--steps", opts->steps, "training steps")->capture_default_str();
    sub->add_option("--lr", opts->lr, "Adam learning rate")->capture_default_str();
    sub->add_option("--hidden", opts->hidden, "perceptron hidden width")
        ->capture_default_str();
    sub->add_option("--init-scale", opts->init_scale, "output-layer init bound")
        ->capture_default_str();
    sub->add_option("--delta", opts->delta, "appended softmax fill")->capture_default_str();
    sub->add_option("--lambda", opts->lambda, "dMOTP balance")->capture_default_str();
    sub->add_option("--gamma", opts->gamma, "soft-IDS penalty")->capture_default_str();
    sub->add_option("--tau-tp", opts->tau_tp, "TP-mask threshold")->capture_default_str();
    sub->add_option("--seed", opts->seed, "random seed")->capture_default_str();
    sub->add_option("--precision", opts->precision, "f64 | f32")->capture_default_str();
    sub->add_option("--out", opts->out, "output checkpoint")->capture_default_str();
    sub->add_option("--curves", opts->curves, "per-step loss csv");
    add_config_and_meta(sub, &opts->meta);
    sub->callback([sub, opts, &action] {
      action = [sub, opts] {
        auto scenes = load_scene_dir(opts->scenes_dir);
        DhnParams dhn = load_dhn(opts->dhn);
        TrackerTrainConfig cfg;
        cfg.steps = opts->steps;
        cfg.lr = opts->lr;
        cfg.seed = opts->seed;
        cfg.hidden = opts->hidden;
        cfg.init_scale = opts->init_scale;
        cfg.loss.delta = opts->delta;
        cfg.loss.lambda = opts->lambda;
        cfg.loss.gamma = opts->gamma;
        cfg.loss.tau_tp = opts->tau_tp;
        cfg.precision = parse_precision(opts->precision);
        TrackerTrainResult r = train_tracker(scenes, dhn, cfg);
        save_tracker(r.params, opts->out);
        if (!opts->curves.empty()) {
          std::ofstream os(opts->curves);
          os << "step,loss\n";
          for (std::size_t i = 0; i < r.losses.size(); ++i)
            os << (i + 1) << ',' << r.losses[i] << "\n";
        }
        write_meta(sub, opts->meta);
        if (r.aborted_non_finite)
          std::printf("warning: divergence, saved the last finite checkpoint\n");
        std::printf("saved %s (%zu steps)\n", opts->out.c_str(), r.losses.size());
        return 0;
      };
    });
  }

  // ---- run-tracker --------------------------------------------------------
  {
    auto* sub = app.add_subcommand("run-tracker", "track detections into a file");
    struct Opts {
      std::string det, tracker, out = "tracks.txt", meta = "run.meta";
      std::size_t birth_frames = 3, patience = 60;
      double birth_iou = 0.3, refine_iou = 0.6, width = 0, height = 0;
    };
    auto opts = std::make_shared<Opts>();
    sub->add_option("--det", opts->det, "detection file")->required();
    sub->add_option("--tracker", opts->tracker, "tracker checkpoint (omit = identity)");
    sub->add_option("--out", opts->out, "output track file")->capture_default_str();
    sub->add_option("--birth-frames", opts->birth_frames)->capture_default_str();
    sub->add_option("--birth-iou", opts->birth_iou)->capture_default_str();
    sub->add_option("--refine-iou", opts->refine_iou)->capture_default_str();
    sub->add_option("--patience", opts->patience, "invisible frames before death")
        ->capture_default_str();
    sub->add_option("--width", opts->width, "frame width (0 = infer)")->capture_default_str();
    sub->add_option("--height", opts->height, "frame height (0 = infer)")
        ->capture_default_str();
    add_config_and_meta(sub, &opts->meta);
    sub->callback([sub, opts, &action] {
      action = [sub, opts] {
        TrackFile dets = load_motchallenge(opts->det, MotKind::det,
                                           {opts->width, opts->height});
        TrackerParams params = opts->tracker.empty() ? TrackerParams::zeros()
                                                     : load_tracker(opts->tracker);
        ManagementConfig mgmt;
        mgmt.birth_frames = opts->birth_frames;
        mgmt.birth_iou = opts->birth_iou;
        mgmt.refine_iou = opts->refine_iou;
        mgmt.death_patience = opts->patience;
        TrackFile out = run_tracker(dets, params, mgmt);
        save_motchallenge(out, opts->out);
        write_meta(sub, opts->meta);
        std::printf("wrote %zu boxes to %s\n", out.total_boxes(), opts->out.c_str());
        return 0;
      };
    });
  }

  // ---- eval-mot -----------------------------------------------------------
  {
    auto* sub = app.add_subcommand("eval-mot", "CLEAR-MOT / IDF1 / MT-ML report");
    struct Opts {
      std::string gt, pred, out, distance = "combined", meta = "run.meta";
      double tau = 0.5, width = 0, height = 0;
    };
    auto opts = std::make_shared<Opts>();
    sub->add_option("--gt", opts->gt, "ground-truth file")->required();
    sub->add_option("--pred", opts->pred, "tracker output file")->required();
    sub->add_option("--tau", opts->tau, "match threshold")->capture_default_str();
    sub->add_option("--distance", opts->distance, "combined | jaccard")
        ->capture_default_str();
    sub->add_option("--out", opts->out, "also write the report as csv");
    sub->add_option("--width", opts->width, "frame width (0 = infer)")->capture_default_str();
    sub->add_option("--height", opts->height, "frame height (0 = infer)")
        ->capture_default_str();
    add_config_and_meta(sub, &opts->meta);
    sub->callback([sub, opts, &action] {
      action = [sub, opts] {
        TrackFile gt = load_motchallenge(opts->gt, MotKind::gt,
                                         {opts->width, opts->height});
        TrackFile pred = load_motchallenge(opts->pred, MotKind::gt, gt.dims);
        // Align the frame ranges: both files describe the same sequence.
        const std::size_t frames = std::max(gt.frame_count(), pred.frame_count());
        gt.ensure_frames(frames);
        pred.ensure_frames(frames);
        EvalOptions eopts;
        eopts.tau = opts->tau;
        if (opts->distance == "jaccard")
          eopts.distance = MatchDistance::jaccard;
        else if (opts->distance != "combined")
          detail::fail_invalid("distance must be combined or jaccard");
        MetricsReport r = evaluate_tracking(gt, pred, eopts);
        std::fputs(report_pretty(r).c_str(), stdout);
        if (!opts->out.empty()) write_report_csv(opts->out, r);
        write_meta(sub, opts->meta);
        return 0;
      };
    });
  }

  // ---- gradfield ----------------------------------------------------------
  {
    auto* sub = app.add_subcommand("gradfield",
                                   "dump -dLoss/dBox for every predicted box");
    struct Opts {
      std::string gt, pred, dhn, out = "gradfield.csv", meta = "run.meta";
      double delta = 0.5, lambda = 5.0, gamma = 2.0, tau_tp = 0.5;
      double width = 0, height = 0;
    };
    auto opts = std::make_shared<Opts>();
    sub->add_option("--gt", opts->gt, "ground-truth file")->required();
    sub->add_option("--pred", opts->pred, "predicted track file")->required();
    sub->add_option("--dhn", opts->dhn, "frozen DHN checkpoint")->required();
    sub->add_option("--out", opts->out, "output csv")->capture_default_str();
    sub->add_option("--delta", opts->delta)->capture_default_str();
    sub->add_option("--lambda", opts->lambda)->capture_default_str();
    sub->add_option("--gamma", opts->gamma)->capture_default_str();
    sub->add_option("--tau-tp", opts->tau_tp)->capture_default_str();
    sub->add_option("--width", opts->width, "frame width (0 = infer)")->capture_default_str();
    sub->add_option("--height", opts->height, "frame height (0 = infer)")
        ->capture_default_str();
    add_config_and_meta(sub, &opts->meta);
    sub->callback([sub, opts, &action] {
      action = [sub, opts] {
        TrackFile gt = load_motchallenge(opts->gt, MotKind::gt,
                                         {opts->width, opts->height});
        TrackFile pred = load_motchallenge(opts->pred, MotKind::gt, gt.dims);
        const std::size_t frames = std::max(gt.frame_count(), pred.frame_count());
        gt.ensure_frames(frames);
        pred.ensure_frames(frames);
        DhnParams dhn = load_dhn(opts->dhn);
        LossConfig cfg;
        cfg.delta = opts->delta;
        cfg.lambda = opts->lambda;
        cfg.gamma = opts->gamma;
        cfg.tau_tp = opts->tau_tp;
        auto rows = loss_grad_wrt_boxes(pred, gt, dhn, cfg);
        write_gradfield_csv(opts->out, rows);
        write_meta(sub, opts->meta);
        std::printf("wrote %zu box gradients to %s\n", rows.size(), opts->out.c_str());
        return 0;
      };
    });
  }

  // ---- selftest -----------------------------------------------------------
  {
    auto* sub = app.add_subcommand("selftest", "run the embedded oracle suites");
    auto trials = std::make_shared<std::size_t>(200);
    auto meta = std::make_shared<std::string>("run.meta");
    sub->add_option("--trials", *trials, "random trials per suite")->capture_default_str();
    add_config_and_meta(sub, meta.get());
    sub->callback([sub, trials, meta, &action] {
      action = [sub, trials, meta] {
        const int rc = run_selftest(*trials);
        write_meta(sub, *meta);
        return rc;
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // invalid configuration
  }

  try {
    return action ? action() : 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

namespace {

int run_selftest(std::size_t trials) {
  int failures = 0;
  auto report = [&](const char* name, bool ok, const std::string& note = "") {
    std::printf("[%s] %s%s%s\n", ok ? "ok" : "FAIL", name,
                note.empty() ? "" : ": ", note.c_str());
    if (!ok) ++failures;
  };

  // Hungarian vs exhaustive search.
  {
    Rng rng(90001);
    bool ok = true;
    std::string note;
    for (std::size_t t = 0; t < trials && ok; ++t) {
      const std::size_t n = 1 + rng.index(5), m = 1 + rng.index(5);
      Tensor d(n, m);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = rng.uniform();
      if (!(solve(d) == oracles::brute_solve(d))) {
        ok = false;
        note = detail::cat("solve trial ", t);
      }
      const double tau = rng.uniform(0.1, 0.9);
      if (ok && !(solve_thresholded(d, tau) == oracles::brute_solve_thresholded(d, tau))) {
        ok = false;
        note = detail::cat("solve_thresholded trial ", t);
      }
    }
    report("hungarian brute-force agreement", ok, note);
  }

  // Finite-difference checks over a sample of primitives and the DHN chain.
  {
    Rng rng(90002);
    bool ok = true;
    std::string note;
    for (std::size_t t = 0; t < std::min<std::size_t>(trials, 25) && ok; ++t) {
      Tensor x(2, 3), w(2, 3);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform(0.2, 1.2);
        w[i] = rng.uniform(-1.0, 1.0);
      }
      double err = finite_diff_check(
          [&](Graph& g, NodeId v) {
            return g.sum(g.mul_mask(g.softmax_rows(g.tanh(v)), w));
          },
          x, 1e-5);
      if (err >= 1e-4) {
        ok = false;
        note = detail::cat("primitive chain err ", err);
      }
    }
    if (ok) {
      DhnConfig cfg;
      cfg.variant = DhnVariant::seq_gru;
      cfg.hidden = 4;
      cfg.head_widths = {6, 1};
      DhnParams params = init_dhn(cfg, 90003);
      Rng dr(90004);
      Tensor d(3, 3);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = dr.uniform();
      Tensor label = oracles::brute_solve(d).matrix();
      std::vector<Tensor> leaves = {d};
      for (const auto& [name, t] : params.tensors) leaves.push_back(t);
      double err = finite_diff_check_multi(
          [&](Graph& g, const std::vector<NodeId>& ids) {
            std::vector<std::pair<std::string, NodeId>> named;
            for (std::size_t i = 0; i < params.tensors.size(); ++i)
              named.emplace_back(params.tensors[i].first, ids[i + 1]);
            return focal_loss_node(g, dhn_forward_with_nodes(g, ids[0], cfg, named),
                                   label, 2.0);
          },
          leaves, 1e-5, 8, 90005);
      if (err >= 1e-4) {
        ok = false;
        note = detail::cat("dhn chain err ", err);
      }
    }
    report("finite-difference gradient oracles", ok, note);
  }

  // Metric hand-cases.
  {
    bool ok = true;
    std::string note;
    const FrameDims dims{640, 480};
    TrackFile gt, pred;
    gt.dims = pred.dims = dims;
    gt.ensure_frames(5);
    pred.ensure_frames(5);
    const Box a{100, 100, 30, 40}, b{500, 300, 30, 40};
    for (std::size_t f = 1; f <= 5; ++f) {
      gt.frame(f).push_back({1, a});
      gt.frame(f).push_back({2, b});
      pred.frame(f).push_back({11, a});
      if (f <= 3) pred.frame(f).push_back({12, b});
    }
    MetricsReport r = clearmot(gt, pred, {});
    if (!(r.fn == 2 && r.fp == 0 && r.ids == 0 && r.mota == 0.8)) {
      ok = false;
      note = "pure-miss table";
    }
    if (ok && std::fabs(idf1(gt, gt, {}) - 1.0) > 1e-12) {
      ok = false;
      note = "idf1 identity";
    }
    if (ok) {
      const double fast = idf1(gt, pred, {});
      const double brute = oracles::brute_idf1(gt, pred, 0.5, false);
      if (std::fabs(fast - brute) > 1e-12) {
        ok = false;
        note = "idf1 oracle";
      }
    }
    report("metric hand-cases", ok, note);
  }

  std::printf(failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace
