#pragma once

// End-to-end composition: detector -> recognizer -> matcher -> metrics, over
// one or more fixture directories, with a deterministic JSON report.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "medrx/detector.hpp"
#include "medrx/errors.hpp"
#include "medrx/fixtures.hpp"
#include "medrx/json_report.hpp"
#include "medrx/lexicon_io.hpp"
#include "medrx/matcher.hpp"
#include "medrx/metrics.hpp"
#include "medrx/recognizer.hpp"
#include "medrx/weights_io.hpp"

namespace medrx {

struct InputSet {
  std::string category;
  std::string dir;
};

struct PipelineConfig {
  std::string weights_path;  // empty: random initialization from `seed`
  std::string lexicon_path;
  std::vector<InputSet> inputs;
  std::string report_path;
  MatcherConfig matcher;
  DetectorConfig detector;
  RecognizerConfig recognizer;
  std::optional<std::uint64_t> seed;
  std::size_t parallelism = 1;
  // Feed ground-truth regions and their observed transcripts straight to the
  // matcher, skipping detection and recognition.
  bool bypass = false;
  double match_iou = 0.5;  // detection <-> annotation pairing for recognition

  bool random_weights() const { return !bypass && weights_path.empty(); }

  void validate() const {
    matcher.validate();
    detector.validate();
    recognizer.validate();
    if (parallelism == 0) throw ConfigError("pipeline: parallelism must be at least 1");
    if (!(match_iou > 0.0 && match_iou < 1.0))
      throw ConfigError("pipeline: match_iou must lie in (0, 1)");
    if (random_weights() && !seed)
      throw ConfigError("pipeline: a seed is required when no weight file is given");
  }

  /// Everything that determines the report. Parallelism is left out on purpose:
  /// reports must not depend on it.
  Json echo() const {
    Json in = Json::array();
    for (const auto& s : inputs) in.push_back({{"category", s.category}, {"dir", s.dir}});
    return Json{{"weights", weights_path.empty() ? Json(nullptr) : Json(weights_path)},
                {"lexicon", lexicon_path},
                {"inputs", in},
                {"mode", bypass ? "bypass" : "full"},
                {"t_l", matcher.t_l},
                {"t_f", matcher.t_f},
                {"proposal_threshold", detector.proposal_threshold},
                {"nms_iou", detector.nms_iou},
                {"detection_threshold", detector.detection_threshold},
                {"channels", detector.channels},
                {"roi_size", detector.roi_size},
                {"patch", recognizer.patch},
                {"dim", recognizer.dim},
                {"heads", recognizer.heads},
                {"layers", recognizer.layers},
                {"ffn_dim", recognizer.ffn_dim},
                {"max_len", recognizer.max_len},
                {"max_patches", recognizer.max_patches},
                {"match_iou", match_iou}};
  }
};

/// Builds DetectorWeights + RecognizerWeights from one RXW1 map ("det.*" and
/// "rec.*" tensors side by side).
struct ModelWeights {
  DetectorWeights detector;
  RecognizerWeights recognizer;

  static ModelWeights random(const DetectorConfig& dc, const RecognizerConfig& rc,
                             std::uint64_t seed) {
    Rng rng(seed);
    ModelWeights m;
    m.detector = DetectorWeights::random(dc, rng);
    m.recognizer = RecognizerWeights::random(rc, rng);
    return m;
  }

  WeightMap to_weight_map() const {
    WeightMap out;
    detector.to_weight_map(out);
    recognizer.to_weight_map(out);
    return out;
  }

  /// Detector channel count and recognizer shapes are read from the map.
  static ModelWeights from_weight_map(const WeightMap& w, DetectorConfig dc,
                                      RecognizerConfig& rc) {
    dc.channels = require_tensor(w, "det.head.objectness.weight").dim(1);
    dc.rpn_kernel = require_tensor(w, "det.rpn.p2.score.weight").dim(3);
    rc = infer_recognizer_config(w, rc);
    return {DetectorWeights::from_weight_map(w, dc), RecognizerWeights::from_weight_map(w, rc)};
  }
};

struct PipelineResources {
  Lexicon lexicon;
  std::optional<ModelWeights> weights;  // absent in bypass mode
  std::vector<std::pair<std::string, FixtureSet>> inputs;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Report types

struct RegionRecord {
  std::string transcript;  // ground truth
  std::string recognized;  // raw text before matching
  MatchDecision decision;
  std::optional<std::size_t> detection;  // index into the image's detections
};

struct ImageRecord {
  std::string category;
  std::string image;
  std::vector<Detection> detections;
  std::vector<RegionRecord> regions;
  std::optional<std::string> error;
};

struct EvalReport {
  Json config;
  std::optional<std::uint64_t> seed;
  std::vector<CerReport> categories;
  ApReport bbox;
  ApReport segm;
  std::vector<ImageRecord> images;
  std::vector<std::string> warnings;

  std::size_t error_count() const {
    return static_cast<std::size_t>(std::count_if(
        images.begin(), images.end(), [](const ImageRecord& r) { return r.error.has_value(); }));
  }
};

// ---------------------------------------------------------------------------
// Per-image work

/// Pixels of `img` inside `box` (outward-rounded to whole pixels), zeroed
/// outside `mask`. Returns [h x w].
inline Tensor crop_region(const GrayImage& img, const Box& box, const BinaryMask& mask) {
  const auto x1 = static_cast<std::size_t>(std::clamp(std::floor(box.x1), 0.0, double(img.width)));
  const auto y1 = static_cast<std::size_t>(std::clamp(std::floor(box.y1), 0.0, double(img.height)));
  const auto x2 = static_cast<std::size_t>(std::clamp(std::ceil(box.x2), 0.0, double(img.width)));
  const auto y2 = static_cast<std::size_t>(std::clamp(std::ceil(box.y2), 0.0, double(img.height)));
  if (x2 <= x1 || y2 <= y1) throw DegenerateBoxError("crop_region: empty crop");
  Tensor out({y2 - y1, x2 - x1});
  for (std::size_t y = y1; y < y2; ++y)
    for (std::size_t x = x1; x < x2; ++x)
      if (mask.empty() || mask.at(y, x))
        out(y - y1, x - x1) = static_cast<float>(img.at(y, x)) / 255.0f;
  return out;
}

/// Pairs each annotation with the unused detection of highest box IoU, if
/// that IoU reaches `min_iou`. Annotations are visited in order.
inline std::vector<std::optional<std::size_t>> pair_detections(
    const std::vector<Annotation>& gt, const std::vector<Detection>& dets, double min_iou) {
  std::vector<std::optional<std::size_t>> out(gt.size());
  std::vector<bool> used(dets.size(), false);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    double best = min_iou;
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (used[d]) continue;
      const double v = iou(gt[g].box, dets[d].box);
      if (v >= best && (!out[g] || v > best)) {
        best = v;
        out[g] = d;
      }
    }
    if (out[g]) used[*out[g]] = true;
  }
  return out;
}

inline ImageRecord process_image(const std::string& category, const Fixture& f,
                                 const PipelineConfig& cfg, const PipelineResources& res) {
  ImageRecord rec{category, f.name, {}, {}, std::nullopt};
  for (const auto& a : f.annotations) {
    if (normalize_token(a.transcript).empty()) {
      throw UndefinedReferenceError("annotation transcript '" + a.transcript +
                                    "' is empty after normalization");
    }
  }
  if (cfg.bypass) {
    for (std::size_t i = 0; i < f.annotations.size(); ++i) {
      const auto& a = f.annotations[i];
      rec.detections.push_back({1.0, a.box, a.mask});
      rec.regions.push_back({a.transcript, a.observed, decide(a.observed, res.lexicon, cfg.matcher), i});
    }
    return rec;
  }
  const ModelWeights& w = *res.weights;
  std::vector<Detection> dets = segment_image(f.image.to_tensor(), w.detector, cfg.detector);
  const auto pairs = pair_detections(f.annotations, dets, cfg.match_iou);
  for (std::size_t i = 0; i < f.annotations.size(); ++i) {
    RegionRecord r{f.annotations[i].transcript, "", {}, pairs[i]};
    if (pairs[i]) {
      const Detection& d = dets[*pairs[i]];
      const Tensor crop = crop_region(f.image, d.box, d.paste(f.image.height, f.image.width));
      r.recognized = recognize(crop, w.recognizer, cfg.recognizer).text;
    }
    r.decision = decide(r.recognized, res.lexicon, cfg.matcher);
    rec.regions.push_back(std::move(r));
  }
  // Image-sized masks from here on, for segm AP and the report.
  for (auto& d : dets) d.mask = d.paste(f.image.height, f.image.width);
  rec.detections = std::move(dets);
  return rec;
}

// ---------------------------------------------------------------------------
// Driver

inline PipelineResources load_resources(const PipelineConfig& cfg, RecognizerConfig& rc) {
  PipelineResources res;
  LexiconLoad lex = load_lexicon(cfg.lexicon_path);
  res.lexicon = std::move(lex.lexicon);
  res.warnings = std::move(lex.warnings);
  if (!cfg.bypass) {
    if (cfg.weights_path.empty()) {
      res.weights = ModelWeights::random(cfg.detector, rc, *cfg.seed);
    } else {
      res.weights = ModelWeights::from_weight_map(load_weights(cfg.weights_path), cfg.detector, rc);
    }
  }
  for (const auto& in : cfg.inputs) res.inputs.emplace_back(in.category, load_fixtures(in.dir));
  return res;
}

inline EvalReport run_pipeline(const PipelineConfig& cfg, const PipelineResources& res) {
  cfg.validate();
  struct Job {
    std::size_t set, image;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < res.inputs.size(); ++s)
    for (std::size_t i = 0; i < res.inputs[s].second.fixtures.size(); ++i) jobs.push_back({s, i});

  std::vector<ImageRecord> records(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      const auto& [category, set] = res.inputs[jobs[j].set];
      const Fixture& f = set.fixtures[jobs[j].image];
      try {
        records[j] = process_image(category, f, cfg, res);
      } catch (const std::exception& e) {
        records[j] = ImageRecord{category, f.name, {}, {}, std::string(e.what())};
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.parallelism, std::max<std::size_t>(jobs.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  EvalReport report;
  report.config = cfg.echo();
  report.seed = cfg.seed;
  report.warnings = res.warnings;
  std::vector<ImageEval> evals;
  for (std::size_t s = 0; s < res.inputs.size(); ++s) {
    std::vector<TextPair> before, after;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].set != s || records[j].error) continue;
      for (const auto& r : records[j].regions) {
        before.push_back({r.transcript, r.recognized});
        after.push_back({r.transcript, r.decision.matched() ? r.decision.outcome : ""});
      }
    }
    report.categories.push_back(compare_before_after(before, after, res.inputs[s].first));
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (records[j].error) continue;
    const Fixture& f = res.inputs[jobs[j].set].second.fixtures[jobs[j].image];
    ImageEval ev;
    for (const auto& d : records[j].detections) ev.detections.push_back({d.score, d.box, d.mask});
    for (const auto& a : f.annotations) ev.ground_truth.push_back({a.box, a.mask});
    evals.push_back(std::move(ev));
  }
  report.bbox = ap_suite(evals, ApTask::bbox);
  report.segm = ap_suite(evals, ApTask::segm);
  report.images = std::move(records);
  return report;
}

inline EvalReport run_pipeline(PipelineConfig cfg) {
  cfg.validate();
  RecognizerConfig rc = cfg.recognizer;
  const PipelineResources res = load_resources(cfg, rc);
  cfg.recognizer = rc;  // shapes taken from the weight file win
  return run_pipeline(cfg, res);
}

// ---------------------------------------------------------------------------
// Serialization

inline Json box_json(const Box& b) { return Json::array({b.x1, b.y1, b.x2, b.y2}); }

inline Json detection_json(const Detection& d) {
  return Json{{"score", d.score}, {"box", box_json(d.box)}, {"mask_rle", rle_to_json(rle_encode(d.mask))}};
}

inline Json decision_json(const MatchDecision& d) {
  return Json{{"query", d.query},
              {"outcome", d.outcome},
              {"display", d.display},
              {"stage", stage_name(d.stage)},
              {"s_l", d.s_l},
              {"s_f", d.s_f}};
}

inline Json to_json(const EvalReport& r) {
  Json cats = Json::array();
  for (const auto& c : r.categories) cats.push_back(to_json(c));
  Json images = Json::array(), errors = Json::array();
  for (const auto& im : r.images) {
    if (im.error) {
      errors.push_back({{"category", im.category}, {"image", im.image}, {"message", *im.error}});
      continue;
    }
    Json regions = Json::array(), dets = Json::array();
    for (const auto& reg : im.regions) {
      Json j = decision_json(reg.decision);
      j["transcript"] = reg.transcript;
      j["recognized"] = reg.recognized;
      j["detection"] = reg.detection ? Json(*reg.detection) : Json(nullptr);
      regions.push_back(std::move(j));
    }
    for (const auto& d : im.detections) dets.push_back(detection_json(d));
    images.push_back({{"category", im.category}, {"image", im.image}, {"regions", regions},
                      {"detections", dets}});
  }
  return Json{{"config", r.config},
              {"seed", r.seed ? Json(*r.seed) : Json(nullptr)},
              {"cer_table", cats},
              {"detection", {{"bbox", to_json(r.bbox)}, {"segm", to_json(r.segm)}}},
              {"images", images},
              {"errors", errors},
              {"warnings", r.warnings}};
}

inline void emit_report(const EvalReport& r, const std::string& path) {
  write_file(path, dump_report(to_json(r)));
}

}  // namespace medrx
