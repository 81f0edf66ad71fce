// medrx: command-line front end for the extraction pipeline.
//
//   medrx gen-fixtures  --lexicon L --out DIR --seed S [--count N] [--p-noise P]
//   medrx init-weights  --seed S --out W.rxw
//   medrx segment       --weights W --image I.pgm
//   medrx recognize     --weights W --image I.pgm [--box x1 y1 x2 y2]
//   medrx match         --lexicon L --query Q...
//   medrx eval          --pairs P.tsv [--category C]
//   medrx pipeline      --lexicon L --input cat=DIR... --report R.json ...
//
// Exit status: 0 success, 1 configuration/input error, 2 partial failures.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "medrx/detector.hpp"
#include "medrx/fixtures.hpp"
#include "medrx/json_report.hpp"
#include "medrx/lexicon_io.hpp"
#include "medrx/matcher.hpp"
#include "medrx/metrics.hpp"
#include "medrx/pgm.hpp"
#include "medrx/pipeline.hpp"
#include "medrx/recognizer.hpp"
#include "medrx/weights_io.hpp"

namespace {

using namespace medrx;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    write_file(path, text);
  }
}

void add_detector_flags(CLI::App* app, DetectorConfig& d) {
  app->add_option("--proposal-threshold", d.proposal_threshold, "RPN objectness cut-off")
      ->capture_default_str();
  app->add_option("--nms-iou", d.nms_iou, "NMS overlap threshold")->capture_default_str();
  app->add_option("--detection-threshold", d.detection_threshold)->capture_default_str();
  app->add_option("--max-proposals", d.max_proposals)->capture_default_str();
  app->add_option("--roi-size", d.roi_size)->capture_default_str();
}

void add_recognizer_flags(CLI::App* app, RecognizerConfig& r, bool shapes) {
  app->add_option("--max-len", r.max_len, "decoded sequence length")->capture_default_str();
  if (!shapes) return;
  app->add_option("--patch", r.patch, "patch side p")->capture_default_str();
  app->add_option("--dim", r.dim, "model width d")->capture_default_str();
  app->add_option("--heads", r.heads)->capture_default_str();
  app->add_option("--layers", r.layers, "encoder/decoder depth N")->capture_default_str();
  app->add_option("--ffn-dim", r.ffn_dim)->capture_default_str();
  app->add_option("--max-patches", r.max_patches)->capture_default_str();
}

void add_matcher_flags(CLI::App* app, MatcherConfig& m) {
  app->add_option("--t-l", m.t_l, "Levenshtein similarity threshold")->capture_default_str();
  app->add_option("--t-f", m.t_f, "fuzzy ratio threshold")->capture_default_str();
}

ModelWeights load_model(const std::string& path, const DetectorConfig& dc, RecognizerConfig& rc) {
  return ModelWeights::from_weight_map(load_weights(path), dc, rc);
}

Box parse_box(const std::vector<double>& v, const GrayImage& img) {
  if (v.empty()) return {0, 0, double(img.width), double(img.height)};
  return {v[0], v[1], v[2], v[3]};
}

std::vector<TextPair> read_pairs(const std::string& path, std::vector<TextPair>& after) {
  std::istringstream in(read_file(path));
  std::vector<TextPair> before;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      cols.push_back(line.substr(start, tab - start));
    cols.push_back(line.substr(start));
    if (cols.size() != 3) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected reference<TAB>before<TAB>after");
    }
    before.push_back({cols[0], cols[1]});
    after.push_back({cols[0], cols[2]});
  }
  return before;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medicine-name extraction: detect, recognize, match, evaluate"};
  app.require_subcommand(1);

  // gen-fixtures
  FixtureConfig fx;
  std::string fx_lexicon, fx_out;
  auto* gen = app.add_subcommand("gen-fixtures", "render synthetic annotated pages");
  gen->add_option("--lexicon", fx_lexicon, "lexicon CSV")->required();
  gen->add_option("--out", fx_out, "output directory")->required();
  gen->add_option("--seed", fx.seed)->required();
  gen->add_option("--count", fx.count)->capture_default_str();
  gen->add_option("--p-noise", fx.p_noise, "per-character corruption probability")
      ->capture_default_str();
  gen->add_option("--max-edits", fx.max_edits, "corruptions per transcript, 0 = unlimited")
      ->capture_default_str();
  gen->add_option("--alphabet", fx.alphabet, "substitution alphabet")->capture_default_str();

  // init-weights
  DetectorConfig iw_det;
  RecognizerConfig iw_rec;
  std::uint64_t iw_seed = 0;
  std::string iw_out;
  float iw_scale = 0.02f;
  auto* init = app.add_subcommand("init-weights", "write seeded random weights (RXW1)");
  init->add_option("--seed", iw_seed)->required();
  init->add_option("--out", iw_out)->required();
  init->add_option("--scale", iw_scale, "uniform init half-width")->capture_default_str();
  init->add_option("--channels", iw_det.channels)->capture_default_str();
  init->add_option("--rpn-kernel", iw_det.rpn_kernel)->capture_default_str();
  add_recognizer_flags(init, iw_rec, true);

  // segment
  DetectorConfig sg_det;
  RecognizerConfig sg_rec;
  std::string sg_weights, sg_image, sg_out;
  auto* seg = app.add_subcommand("segment", "detect medicine-name regions in a PGM page");
  seg->add_option("--weights", sg_weights)->required();
  seg->add_option("--image", sg_image)->required();
  seg->add_option("--out", sg_out, "JSON output (default stdout)");
  add_detector_flags(seg, sg_det);

  // recognize
  RecognizerConfig rc_rec;
  std::string rc_weights, rc_image;
  std::vector<double> rc_box;
  auto* rec = app.add_subcommand("recognize", "transcribe a PGM region");
  rec->add_option("--weights", rc_weights)->required();
  rec->add_option("--image", rc_image)->required();
  rec->add_option("--box", rc_box, "crop x1 y1 x2 y2")->expected(4);
  add_recognizer_flags(rec, rc_rec, false);

  // match
  MatcherConfig mt;
  std::string mt_lexicon;
  std::vector<std::string> mt_queries;
  auto* match = app.add_subcommand("match", "match recognized strings against the lexicon");
  match->add_option("--lexicon", mt_lexicon)->required();
  match->add_option("--query,query", mt_queries)->required();
  add_matcher_flags(match, mt);

  // eval
  std::string ev_pairs, ev_category = "default";
  auto* eval = app.add_subcommand("eval", "CER before/after matching from a TSV file");
  eval->add_option("--pairs", ev_pairs, "reference<TAB>before<TAB>after per line")->required();
  eval->add_option("--category", ev_category)->capture_default_str();

  // pipeline
  PipelineConfig pc;
  std::vector<std::string> pc_inputs;
  std::uint64_t pc_seed = 0;
  auto* pipe = app.add_subcommand("pipeline", "end-to-end run with CER/AP report");
  pipe->add_option("--weights", pc.weights_path, "RXW1 file; omit for seeded random weights");
  pipe->add_option("--lexicon", pc.lexicon_path)->required();
  pipe->add_option("--input", pc_inputs, "category=fixture_dir (repeatable)")->required();
  pipe->add_option("--report", pc.report_path, "report JSON (default stdout)");
  auto* seed_opt = pipe->add_option("--seed", pc_seed);
  pipe->add_option("--parallelism,-j", pc.parallelism)->capture_default_str();
  pipe->add_flag("--bypass", pc.bypass, "ground-truth regions and transcripts into the matcher");
  pipe->add_option("--match-iou", pc.match_iou)->capture_default_str();
  add_matcher_flags(pipe, pc.matcher);
  add_detector_flags(pipe, pc.detector);
  add_recognizer_flags(pipe, pc.recognizer, true);
  pipe->add_option("--channels", pc.detector.channels)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      LexiconLoad lex = load_lexicon(fx_lexicon);
      for (const auto& w : lex.warnings) std::cerr << "warning: " << w << "\n";
      const FixtureSet set = gen_fixtures(fx, lex.lexicon);
      save_fixtures(set, fx_out);
      std::cerr << "wrote " << set.fixtures.size() << " fixtures to " << fx_out << "\n";
    } else if (*init) {
      iw_det.validate();
      iw_rec.validate();
      Rng rng(iw_seed);
      ModelWeights m{DetectorWeights::random(iw_det, rng, iw_scale),
                     RecognizerWeights::random(iw_rec, rng, iw_scale)};
      const WeightMap w = m.to_weight_map();
      save_weights(w, iw_out);
      std::cerr << "wrote " << w.size() << " tensors to " << iw_out << "\n";
    } else if (*seg) {
      const ModelWeights m = load_model(sg_weights, sg_det, sg_rec);
      DetectorConfig cfg = sg_det;
      cfg.channels = m.detector.channels();
      const GrayImage img = load_pgm(sg_image);
      Json out = Json::array();
      for (auto d : segment_image(img.to_tensor(), m.detector, cfg)) {
        d.mask = d.paste(img.height, img.width);
        out.push_back(detection_json(d));
      }
      write_or_print(sg_out, dump_report(out));
    } else if (*rec) {
      const ModelWeights m = load_model(rc_weights, DetectorConfig{}, rc_rec);
      const GrayImage img = load_pgm(rc_image);
      const Tensor crop = crop_region(img, parse_box(rc_box, img), BinaryMask{});
      const TokenSequence seq = recognize(crop, m.recognizer, rc_rec);
      write_or_print("", dump_report(Json{{"text", seq.text}, {"ids", seq.ids}}));
    } else if (*match) {
      LexiconLoad lex = load_lexicon(mt_lexicon);
      for (const auto& w : lex.warnings) std::cerr << "warning: " << w << "\n";
      Json out = Json::array();
      for (const auto& q : mt_queries) {
        Json j = decision_json(decide(q, lex.lexicon, mt));
        j["input"] = q;
        out.push_back(std::move(j));
      }
      write_or_print("", dump_report(out));
    } else if (*eval) {
      std::vector<TextPair> after;
      const auto before = read_pairs(ev_pairs, after);
      write_or_print("", dump_report(to_json(compare_before_after(before, after, ev_category))));
    } else if (*pipe) {
      if (*seed_opt) pc.seed = pc_seed;
      for (const auto& spec : pc_inputs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
          throw ConfigError("--input expects category=dir, got '" + spec + "'");
        }
        pc.inputs.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
      }
      const EvalReport report = run_pipeline(pc);
      const std::string text = dump_report(to_json(report));
      write_or_print(pc.report_path, text);
      for (const auto& c : report.categories) {
        std::fprintf(stderr, "%-20s cer_before %.4f  cer_after %.4f  improvement %.4f\n",
                     c.category.c_str(), c.cer_before, c.cer_after, c.improvement());
      }
      if (const std::size_t n = report.error_count()) {
        std::cerr << n << " image(s) failed; see the report's error list\n";
        return kExitPartial;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
