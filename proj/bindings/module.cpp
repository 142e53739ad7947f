#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "deepmot/datasets.hpp"
#include "deepmot/dhn.hpp"
#include "deepmot/hungarian.hpp"
#include "deepmot/loss.hpp"
#include "deepmot/moteval.hpp"
#include "deepmot/toytracker.hpp"

namespace py = pybind11;
using namespace deepmot;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2D array");
  Tensor t(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + t.size(), t.ptr());
  return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  py::array_t<double> a({t.rows(), t.cols()});
  std::copy(t.ptr(), t.ptr() + t.size(), a.mutable_data());
  return a;
}

Box box_from_seq(const std::vector<double>& v) {
  if (v.size() != 4) throw py::value_error("a box is (left, top, width, height)");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

PYBIND11_MODULE(_deepmot, m) {
  m.doc() = "Differentiable multi-object-tracking toolkit: exact Hungarian "
            "matching, Deep Hungarian Net inference, the differentiable "
            "CLEAR-MOT loss, and classic tracking metrics.";

  m.def(
      "solve",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& d) {
        return array_from_tensor(solve(tensor_from_array(d)).matrix());
      },
      py::arg("distance_matrix"),
      "Exact minimum-cost assignment with min(N, M) matches.");

  m.def(
      "solve_thresholded",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& d,
         double tau) {
        return array_from_tensor(solve_thresholded(tensor_from_array(d), tau).matrix());
      },
      py::arg("distance_matrix"), py::arg("tau"),
      "Maximum-cardinality minimum-cost matching among pairs with d <= tau.");

  m.def(
      "iou",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return iou(box_from_seq(a), box_from_seq(b));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "pair_distance",
      [](const std::vector<double>& a, const std::vector<double>& b, double width,
         double height) {
        return pair_distance(box_from_seq(a), box_from_seq(b), {width, height});
      },
      py::arg("a"), py::arg("b"), py::arg("frame_width"), py::arg("frame_height"),
      "Average of the normalized center distance and the Jaccard distance.");

  m.def(
      "distance_matrix",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& tracks,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& objects,
         double width, double height) {
        return array_from_tensor(distance_matrix(
            tensor_to_boxes(tensor_from_array(tracks)),
            tensor_to_boxes(tensor_from_array(objects)), {width, height}));
      },
      py::arg("tracks"), py::arg("objects"), py::arg("frame_width"),
      py::arg("frame_height"));

  m.def(
      "focal_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& label,
         double gamma) {
        return focal_loss(tensor_from_array(pred), tensor_from_array(label), gamma);
      },
      py::arg("pred"), py::arg("label"), py::arg("gamma") = 2.0);

  m.def(
      "discretize",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& soft,
         const std::string& mode) {
        return array_from_tensor(discretize(
            tensor_from_array(soft),
            mode == "column" ? DiscretizeMode::column : DiscretizeMode::row));
      },
      py::arg("soft"), py::arg("mode") = "row",
      "Row/column-wise maximum above 0.5.");

  m.def(
      "soft_counts",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
         double delta, double sharpen) {
        LossConfig cfg;
        cfg.delta = delta;
        cfg.sharpen = sharpen;
        SoftCounts c = soft_counts(tensor_from_array(a), cfg);
        py::dict out;
        out["fp"] = c.fp_soft;
        out["fn"] = c.fn_soft;
        out["cr"] = array_from_tensor(c.cr);
        out["cc"] = array_from_tensor(c.cc);
        return out;
      },
      py::arg("soft_assignment"), py::arg("delta") = 0.5, py::arg("sharpen") = 1.0);

  m.def(
      "dmotp",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& d,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& mask) {
        return dmotp(tensor_from_array(d), tensor_from_array(mask));
      },
      py::arg("distance_matrix"), py::arg("tp_mask"));

  m.def(
      "deepmot_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& d,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& a_soft,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b_curr,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b_prev,
         std::size_t gt_count, double delta, double lambda, double gamma) {
        LossConfig cfg;
        cfg.delta = delta;
        cfg.lambda = lambda;
        cfg.gamma = gamma;
        Tensor curr_mask = tensor_from_array(b_curr);
        TpMask curr;
        curr.mask = curr_mask;
        curr.track_ids.resize(curr_mask.rows());
        curr.gt_ids.resize(curr_mask.cols());
        return deepmot_loss(tensor_from_array(d), tensor_from_array(a_soft), curr,
                            tensor_from_array(b_prev), gt_count, cfg);
      },
      py::arg("distance_matrix"), py::arg("soft_assignment"), py::arg("tp_mask"),
      py::arg("prev_tp_mask"), py::arg("gt_count"), py::arg("delta") = 0.5,
      py::arg("lambda_") = 5.0, py::arg("gamma") = 2.0,
      "(1 - dMOTA) + lambda * (1 - dMOTP) for one frame.");

  py::class_<DhnParams>(m, "Dhn")
      .def_static(
          "init",
          [](const std::string& variant, std::size_t hidden, std::uint64_t seed) {
            DhnConfig cfg;
            cfg.variant = variant_from_name(variant);
            cfg.hidden = hidden;
            return init_dhn(cfg, seed);
          },
          py::arg("variant") = "seq_gru", py::arg("hidden") = 64, py::arg("seed") = 7)
      .def_static("load", &load_dhn, py::arg("path"))
      .def("save", [](const DhnParams& p, const std::string& path) { save_dhn(p, path); },
           py::arg("path"))
      .def_property_readonly(
          "variant", [](const DhnParams& p) { return variant_name(p.config.variant); })
      .def_property_readonly("hidden",
                             [](const DhnParams& p) { return p.config.hidden; })
      .def(
          "forward",
          [](const DhnParams& p,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& d) {
            return array_from_tensor(dhn_forward(tensor_from_array(d), p));
          },
          py::arg("distance_matrix"),
          "Soft assignment matrix in (0, 1) with the input's shape.");

  m.def(
      "gen_matrix_pairs",
      [](std::size_t count, std::size_t min_size, std::size_t max_size,
         const std::string& mode, std::uint64_t seed) {
        PairMode pm = PairMode::mixed;
        if (mode == "uniform") pm = PairMode::uniform;
        else if (mode == "tracking") pm = PairMode::tracking_like;
        else if (mode != "mixed") throw py::value_error("mode: uniform|tracking|mixed");
        auto pairs = gen_matrix_pairs(count, min_size, max_size, pm, seed);
        py::list out;
        for (const auto& p : pairs)
          out.append(py::make_tuple(array_from_tensor(p.d), array_from_tensor(p.a_star)));
        return out;
      },
      py::arg("count"), py::arg("min_size") = 2, py::arg("max_size") = 12,
      py::arg("mode") = "mixed", py::arg("seed") = 1);

  m.def(
      "evaluate_tracking",
      [](const std::string& gt_path, const std::string& pred_path, double tau,
         const std::string& distance) {
        TrackFile gt = load_motchallenge(gt_path, MotKind::gt);
        TrackFile pred = load_motchallenge(pred_path, MotKind::gt, gt.dims);
        const std::size_t frames = std::max(gt.frame_count(), pred.frame_count());
        gt.ensure_frames(frames);
        pred.ensure_frames(frames);
        EvalOptions opts;
        opts.tau = tau;
        if (distance == "jaccard") opts.distance = MatchDistance::jaccard;
        MetricsReport r = evaluate_tracking(gt, pred, opts);
        py::dict out;
        out["MOTA"] = r.mota;
        out["MOTP_dist"] = r.motp_dist;
        out["MOTP_pct"] = r.motp_pct;
        out["IDF1"] = r.idf1;
        out["MT"] = r.mt;
        out["ML"] = r.ml;
        out["FP"] = r.fp;
        out["FN"] = r.fn;
        out["IDS"] = r.ids;
        out["TP"] = r.tp;
        return out;
      },
      py::arg("gt_path"), py::arg("pred_path"), py::arg("tau") = 0.5,
      py::arg("distance") = "combined");
}
