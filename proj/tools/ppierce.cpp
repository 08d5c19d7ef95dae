// Command-line front end: one verb per pipeline stage.
//
//   ppierce synth   --config c.json --seed 1 --out data/
//   ppierce train   --config c.json --seed 1 --manifest data/manifest.jsonl --variant aodx --out aodx.params
//   ppierce dehaze  --params aod.params --input foggy.png --output out.png [--detections dets.jsonl]
//   ppierce detect  --input img.png --strength strong --image-id x --output dets.jsonl
//   ppierce run     --manifest data/manifest.jsonl --aod aod.params --aodx aodx.params --out runs/
//   ppierce eval    --manifest data/manifest.jsonl --aod aod.params --aodx aodx.params --out runs/
//   ppierce report  --input runs/run-seed1/report.json --format text
//   ppierce ingest  --layout voc --list splits.txt --out manifest.jsonl

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "pp/config.hpp"
#include "pp/error.hpp"
#include "pp/harness.hpp"
#include "pp/simd.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string isa;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Run configuration (JSON)");
  cmd->add_option("--seed", c.seed, "Run seed (dataset rendering and training)")->each([&c](const std::string&) {
    c.seed_given = true;
  });
  cmd->add_option("--isa", c.isa, "Force the kernel variant (scalar or avx2)");
}

pp::RunConfig resolve(const Common& c) {
  if (!c.isa.empty()) pp::simd::set_active_isa(pp::simd::parse_isa(c.isa));
  pp::RunConfig cfg = c.config_path.empty() ? pp::RunConfig{} : pp::load_config(c.config_path);
  if (c.seed_given) cfg.train.seed = c.seed;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw pp::IoError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw pp::IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path run_dir(const fs::path& out, std::uint64_t seed) { return out / ("run-seed" + std::to_string(seed)); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze-directed dehazing and detection pipeline"};
  app.require_subcommand(1);

  Common common;

  // synth
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Render a synthetic foggy dataset and its manifest");
  add_common(synth, common);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  std::string train_manifest, train_out, train_variant = "aodx";
  auto* train = app.add_subcommand("train", "Train a dehazer on a manifest's train split");
  add_common(train, common);
  train->add_option("--manifest", train_manifest, "Dataset manifest")->required();
  train->add_option("--variant", train_variant, "aod (no attention) or aodx (ROI attention)");
  train->add_option("--out", train_out, "Parameter file to write")->required();

  // dehaze
  std::string dh_params, dh_input, dh_output, dh_dets;
  double dh_lambda = -1.0;
  auto* dehaze = app.add_subcommand("dehaze", "Dehaze one image");
  add_common(dehaze, common);
  dehaze->add_option("--params", dh_params, "Dehazer parameter file")->required();
  dehaze->add_option("--input", dh_input, "Foggy RGB PNG")->required();
  dehaze->add_option("--output", dh_output, "Output PNG")->required();
  dehaze->add_option("--detections", dh_dets, "ROI detections (exchange format); enables attention");
  dehaze->add_option("--lambda-min", dh_lambda, "Attention floor (default from config)");

  // detect
  std::string det_input, det_output, det_id, det_strength = "strong";
  auto* detect = app.add_subcommand("detect", "Run the built-in toy detector on one image");
  add_common(detect, common);
  detect->add_option("--input", det_input, "Image PNG")->required();
  detect->add_option("--output", det_output, "Detections file")->required();
  detect->add_option("--image-id", det_id, "image_id written to the records");
  detect->add_option("--strength", det_strength, "weak (preliminary tier) or strong (final tier)");

  // run
  std::string run_manifest, run_aod, run_aodx, run_out, run_split = "test", run_pre_dir, run_final_dir;
  bool run_save_images = false;
  auto* run = app.add_subcommand("run", "Run the full pipeline over a manifest split and write traces");
  add_common(run, common);
  run->add_option("--manifest", run_manifest, "Dataset manifest")->required();
  run->add_option("--aod", run_aod, "Parameters for global dehazing");
  run->add_option("--aodx", run_aodx, "Parameters for gaze-directed dehazing");
  run->add_option("--split", run_split, "train, val or test");
  run->add_option("--preliminary-detections", run_pre_dir, "Directory of <image_id>.jsonl from an external model");
  run->add_option("--final-detections", run_final_dir, "Directory of <image_id>.jsonl from an external model");
  run->add_flag("--save-images", run_save_images, "Also write ROI masks and dehazed images");
  run->add_option("--out", run_out, "Output directory")->required();

  // eval
  std::string ev_manifest, ev_aod, ev_aodx, ev_out, ev_ood;
  bool ev_psnr_bytes = false;
  auto* eval = app.add_subcommand("eval", "Evaluate dehazing quality and pipeline mAP");
  add_common(eval, common);
  eval->add_option("--manifest", ev_manifest, "Dataset manifest")->required();
  eval->add_option("--aod", ev_aod, "Parameters of the dehazer without attention")->required();
  eval->add_option("--aodx", ev_aodx, "Parameters of the attention dehazer")->required();
  eval->add_option("--ood-manifest", ev_ood, "Second manifest for out-of-distribution rows");
  eval->add_flag("--psnr-bytes", ev_psnr_bytes, "Report PSNR against 255 after byte quantization");
  eval->add_option("--out", ev_out, "Output directory (a run-seed<N> directory is created)")->required();

  // report
  std::string rep_input, rep_format = "text", rep_out;
  auto* report = app.add_subcommand("report", "Render a structured report");
  add_common(report, common);
  report->add_option("--input", rep_input, "report.json from eval")->required();
  report->add_option("--format", rep_format, "text or structured");
  report->add_option("--out", rep_out, "Output file (stdout when omitted)");

  // ingest
  std::string ing_layout, ing_list, ing_out;
  auto* ingest = app.add_subcommand("ingest", "Convert an external dataset split list into a manifest");
  add_common(ingest, common);
  ingest->add_option("--layout", ing_layout, "cityscapes or voc")->required();
  ingest->add_option("--list", ing_list, "Split list file")->required();
  ingest->add_option("--out", ing_out, "Manifest to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const pp::RunConfig cfg = resolve(common);

    if (synth->parsed()) {
      const auto m = pp::materialize_dataset(cfg, common.seed, synth_out);
      std::cout << "wrote " << m.records.size() << " scenes to " << synth_out << "\n";
    } else if (train->parsed()) {
      const auto manifest = pp::load_manifest(train_manifest);
      const auto variant = pp::parse_variant(train_variant);
      const auto result = pp::train_from_manifest(manifest, cfg, variant, [](const pp::EpochLoss& e) {
        std::printf("epoch %3d  %-4s  train %.6f  val %.6f\n", e.epoch, e.attention ? "attn" : "k", e.train_loss,
                    e.val_loss);
        std::fflush(stdout);
      });
      pp::save_dehazer(result.params, train_out);
      std::cout << "initial val loss " << result.history.initial_val_loss << ", saved " << train_out << "\n";
    } else if (dehaze->parsed()) {
      const auto params = pp::load_dehazer(dh_params);
      const auto img = pp::load_image(dh_input);
      pp::Image out;
      if (dh_dets.empty()) {
        out = pp::dehaze_aod(params, img);
      } else {
        const auto dets = pp::load_detections(dh_dets).detections;
        const auto roi = pp::rasterize_rois(dets, img.height(), img.width(), cfg.pipeline.roi_margin,
                                            cfg.pipeline.roi_feather);
        out = pp::forward_aodx(params, img, roi, dh_lambda >= 0.0 ? dh_lambda : cfg.pipeline.lambda_min);
      }
      pp::save_image(out, dh_output);
    } else if (detect->parsed()) {
      const auto img = pp::load_image(det_input);
      const auto strength = det_strength == "weak" ? pp::DetectorStrength::weak : pp::DetectorStrength::strong;
      if (det_strength != "weak" && det_strength != "strong") throw pp::DomainError("--strength must be weak or strong");
      const auto dets = pp::toy_detect(img, pp::detector_for(cfg, strength));
      pp::save_detections(det_id.empty() ? fs::path(det_input).stem().string() : det_id, dets, det_output);
      std::cout << dets.size() << " detection(s)\n";
    } else if (run->parsed()) {
      const auto manifest = pp::load_manifest(run_manifest);
      const auto aod = run_aod.empty() ? pp::identity_dehazer() : pp::load_dehazer(run_aod);
      const auto aodx = run_aodx.empty() ? pp::identity_dehazer() : pp::load_dehazer(run_aodx);
      auto detectors = pp::toy_detectors(cfg);
      if (!run_pre_dir.empty()) detectors.preliminary = pp::file_detector(run_pre_dir);
      if (!run_final_dir.empty()) detectors.final_detector = pp::file_detector(run_final_dir);
      const fs::path dir = run_dir(run_out, common.seed);
      fs::create_directories(dir);
      std::ofstream traces(dir / "traces.jsonl", std::ios::binary | std::ios::trunc);
      const auto split = pp::parse_split(run_split);
      for (const auto* rec : manifest.split(split)) {
        const auto loaded = pp::load_record(manifest, *rec);
        const std::string& id = rec->id;
        pp::DetectorFn pre = [&](const pp::Image& x) { return detectors.preliminary(id, x); };
        pp::DetectorFn fin = [&](const pp::Image& x) { return detectors.final_detector(id, x); };
        const auto& params = cfg.pipeline.mode == pp::PipelineMode::global_dehaze ? aod : aodx;
        const auto trace = pp::run_pipeline(loaded.foggy, params, pre, fin, cfg.pipeline);
        traces << pp::format_trace_record(id, trace) << '\n';
        if (run_save_images) {
          if (trace.roi) pp::save_image(trace.roi->mask, dir / (id + "_roi.png"));
          if (trace.dehazed) pp::save_image(*trace.dehazed, dir / (id + "_dehazed.png"));
        }
      }
      std::cout << "traces written to " << (dir / "traces.jsonl").string() << "\n";
    } else if (eval->parsed()) {
      const auto manifest = pp::load_manifest(ev_manifest);
      const auto aod = pp::load_dehazer(ev_aod);
      const auto aodx = pp::load_dehazer(ev_aodx);
      std::optional<pp::DatasetManifest> ood;
      if (!ev_ood.empty()) ood = pp::load_manifest(ev_ood);

      pp::MetricReport rep;
      rep.seed = common.seed;
      rep.config_hash = pp::config_hash(cfg);
      rep.kernel_isa = std::string(pp::simd::isa_name(pp::simd::active_isa()));
      const std::vector<pp::DehazeEvalVariant> variants{
          {"foggy (no dehazing)", pp::DehazeMethod::identity, {}, 0.0},
          {"oracle K", pp::DehazeMethod::oracle, {}, 0.0},
          {"aod", pp::DehazeMethod::aod, aod, 0.0},
          {"aodx", pp::DehazeMethod::aodx, aodx, cfg.pipeline.lambda_min},
      };
      const auto start = std::chrono::steady_clock::now();
      rep.rows = pp::run_dehaze_eval(manifest, variants, cfg, {ev_psnr_bytes});
      const double dehaze_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const auto detect_rows =
          pp::run_detect_eval(manifest, aod, aodx, pp::toy_detectors(cfg), cfg, ood ? &*ood : nullptr);
      rep.rows.insert(rep.rows.end(), detect_rows.begin(), detect_rows.end());
      const double total_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

      const fs::path dir = run_dir(ev_out, common.seed);
      write_text(dir / "report.json", pp::emit_report(rep, pp::ReportFormat::structured));
      write_text(dir / "config.json", pp::config_to_json(cfg));
      nlohmann::ordered_json timings{{"dehaze_eval_seconds", dehaze_s}, {"total_seconds", total_s}};
      write_text(dir / "timings.json", timings.dump(2) + "\n");
      std::cout << pp::emit_report(rep, pp::ReportFormat::text_table);
      std::cout << "\nreport: " << (dir / "report.json").string() << "\n";
    } else if (report->parsed()) {
      const auto rep = pp::parse_report(read_text(rep_input));
      if (rep_format != "text" && rep_format != "structured") throw pp::DomainError("--format must be text or structured");
      const auto text =
          pp::emit_report(rep, rep_format == "text" ? pp::ReportFormat::text_table : pp::ReportFormat::structured);
      if (rep_out.empty()) {
        std::cout << text;
      } else {
        write_text(rep_out, text);
      }
    } else if (ingest->parsed()) {
      pp::AnnotationLayout layout;
      if (ing_layout == "cityscapes") {
        layout = pp::AnnotationLayout::cityscapes_polygons;
      } else if (ing_layout == "voc") {
        layout = pp::AnnotationLayout::voc_xml;
      } else {
        throw pp::DomainError("--layout must be cityscapes or voc");
      }
      const auto m = pp::ingest_split_list(ing_list, layout);
      pp::save_manifest(m, ing_out);
      std::cout << "wrote " << m.records.size() << " records to " << ing_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
