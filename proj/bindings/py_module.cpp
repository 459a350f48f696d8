#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "nnspeaker/audio.hpp"
#include "nnspeaker/classify.hpp"
#include "nnspeaker/corpus.hpp"
#include "nnspeaker/features.hpp"
#include "nnspeaker/nn.hpp"
#include "nnspeaker/pipeline.hpp"
#include "nnspeaker/preprocess.hpp"
#include "nnspeaker/synth.hpp"
#include "nnspeaker/verify.hpp"

namespace py = pybind11;
using namespace nnspeaker;

namespace {

AudioBuffer make_audio(const Eigen::VectorXd& samples, int sample_rate) {
  AudioBuffer audio;
  audio.sample_rate = sample_rate;
  audio.samples.assign(samples.data(), samples.data() + samples.size());
  return audio;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

preprocess::VadConfig vad_config(int step, int order, int bins, double weight) {
  preprocess::VadConfig cfg;
  cfg.smooth_step = step;
  cfg.smooth_order = order;
  cfg.hist_bins = bins;
  cfg.peak_weight = weight;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Speaker classification and verification toolkit (native core)";

  // corpus
  m.def(
      "generate_synthetic_corpus",
      [](uint64_t seed, int n_speakers, int files_per_speaker, double duration_s,
         const std::filesystem::path& out_dir) {
        corpus::SynthConfig cfg;
        cfg.seed = seed;
        cfg.n_speakers = n_speakers;
        cfg.files_per_speaker = files_per_speaker;
        cfg.duration_s = duration_s;
        const auto manifest = corpus::generate_synthetic_corpus(cfg, out_dir);
        py::list entries;
        for (const auto& e : manifest.entries)
          entries.append(py::make_tuple(e.speaker_id, e.sentence_id,
                                        corpus::category_name(e.category),
                                        e.path.generic_string()));
        return entries;
      },
      py::arg("seed"), py::arg("n_speakers"), py::arg("files_per_speaker"),
      py::arg("duration_s"), py::arg("out_dir"));

  m.def(
      "read_wav",
      [](const std::filesystem::path& path) {
        const AudioBuffer audio = read_wav(path);
        return py::make_tuple(to_vector(audio.samples), audio.sample_rate);
      },
      py::arg("path"));

  m.def(
      "write_wav",
      [](const std::filesystem::path& path, const Eigen::VectorXd& samples, int sample_rate) {
        write_wav(path, make_audio(samples, sample_rate));
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate"));

  // preprocessing
  m.def(
      "normalize_amplitude",
      [](const Eigen::VectorXd& samples) {
        return to_vector(preprocess::normalize_amplitude(make_audio(samples, 8000)).samples);
      },
      py::arg("samples"));

  m.def(
      "short_term_energy",
      [](const Eigen::VectorXd& frame) {
        return preprocess::short_term_energy(
            std::span<const double>(frame.data(), static_cast<size_t>(frame.size())));
      },
      py::arg("frame"));

  m.def(
      "spectral_centroid",
      [](const Eigen::VectorXd& frame) {
        return preprocess::spectral_centroid(
            std::span<const double>(frame.data(), static_cast<size_t>(frame.size())));
      },
      py::arg("frame"));

  m.def(
      "median_smooth",
      [](const std::vector<double>& series, int step, int order) {
        return preprocess::median_smooth(series, step, order);
      },
      py::arg("series"), py::arg("step") = 7, py::arg("order") = 2);

  m.def(
      "histogram_threshold",
      [](const std::vector<double>& series, int bins, double weight) {
        return preprocess::histogram_threshold(series, bins, weight);
      },
      py::arg("series"), py::arg("bins") = 30, py::arg("weight") = 3.0);

  m.def(
      "detect_voice",
      [](const Eigen::VectorXd& samples, int sample_rate, int step, int order, int bins,
         double weight) {
        const auto mask =
            preprocess::detect_voice(make_audio(samples, sample_rate),
                                     vad_config(step, order, bins, weight));
        py::dict out;
        out["frame_decisions"] = std::vector<bool>(mask.frame_decisions.begin(),
                                                   mask.frame_decisions.end());
        out["sample_mask"] =
            std::vector<bool>(mask.sample_mask.begin(), mask.sample_mask.end());
        out["threshold_energy"] = mask.threshold_energy;
        out["threshold_centroid"] = mask.threshold_centroid;
        return out;
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("step") = 7, py::arg("order") = 2,
      py::arg("bins") = 30, py::arg("weight") = 3.0);

  m.def(
      "extract_voiced",
      [](const Eigen::VectorXd& samples, const std::vector<bool>& sample_mask) {
        preprocess::VadMask mask;
        mask.sample_mask = sample_mask;
        return to_vector(preprocess::extract_voiced(make_audio(samples, 8000), mask).samples);
      },
      py::arg("samples"), py::arg("sample_mask"));

  // features
  m.def(
      "mfcc",
      [](const Eigen::VectorXd& samples, int sample_rate, int n_mels, int n_coeffs) {
        features::MfccConfig cfg;
        cfg.n_mels = n_mels;
        cfg.n_coeffs = n_coeffs;
        return features::mfcc(make_audio(samples, sample_rate), cfg).data;
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("n_mels") = 20,
      py::arg("n_coeffs") = 13);

  m.def(
      "add_deltas",
      [](const Eigen::MatrixXd& mat) {
        features::FeatureMatrix fm;
        fm.data = mat;
        return features::add_deltas(fm).data;
      },
      py::arg("features"));

  m.def(
      "concatenate_frames",
      [](const Eigen::MatrixXd& mat, int win, int hop) {
        features::FeatureMatrix fm;
        fm.data = mat;
        fm.win_s = 0.025;
        fm.hop_s = 0.010;
        return features::concatenate_frames(fm, win, hop).data;
      },
      py::arg("features"), py::arg("win_frames") = 10, py::arg("hop_frames") = 3);

  // network
  m.def(
      "gradient_check",
      [](const std::vector<int>& sizes, int n_samples, uint64_t seed, double lambda) {
        return nn::gradient_check(sizes, n_samples, seed, lambda);
      },
      py::arg("layer_sizes"), py::arg("n_samples") = 7, py::arg("seed") = 1,
      py::arg("lambda_") = 0.0);

  // classification / verification metrics
  m.def("duration_from_frames", &classify::duration_from_frames, py::arg("n"),
        py::arg("t_win") = 0.100, py::arg("t_hop") = 0.030);

  m.def(
      "normalize_scores",
      [](const Eigen::VectorXd& scores) { return verify::normalize_scores(scores); },
      py::arg("scores"));

  m.def("gaussian_intersection", &verify::gaussian_intersection, py::arg("mu1"),
        py::arg("sigma1"), py::arg("p1"), py::arg("mu2"), py::arg("sigma2"));

  m.def(
      "roc",
      [](const std::vector<double>& scores, const std::vector<bool>& is_client) {
        if (scores.size() != is_client.size())
          throw std::invalid_argument("scores and labels must have the same length");
        std::vector<std::pair<double, bool>> trials;
        trials.reserve(scores.size());
        for (size_t i = 0; i < scores.size(); ++i) trials.emplace_back(scores[i], is_client[i]);
        const auto curve = verify::roc(trials);
        py::dict out;
        out["eer_pct"] = curve.eer_pct;
        out["auc_pct"] = curve.auc_pct;
        out["threshold_at_eer"] = curve.threshold_at_eer;
        py::list points;
        for (const auto& p : curve.points)
          points.append(py::make_tuple(p.threshold, p.fpr, p.tpr));
        out["points"] = points;
        return out;
      },
      py::arg("scores"), py::arg("is_client"));

  // pipeline
  m.def(
      "run_pipeline",
      [](const std::map<std::string, std::string>& config,
         const std::vector<std::string>& stages) {
        const auto cfg = pipeline::RunConfig::from_overrides(config);
        const auto result = pipeline::run_pipeline(cfg, stages);
        py::dict out;
        out["ok"] = result.ok;
        out["failed_stage"] = result.failed_stage;
        out["error"] = result.error;
        py::list stage_list;
        for (const auto& s : result.stages) {
          py::dict d;
          d["stage"] = s.stage;
          d["ran"] = s.ran;
          d["skipped"] = s.skipped;
          stage_list.append(d);
        }
        out["stages"] = stage_list;
        return out;
      },
      py::arg("config"), py::arg("stages") = std::vector<std::string>{});
}
