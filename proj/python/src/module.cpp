#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "hetsep/acoustics.hpp"
#include "hetsep/checkpoint.hpp"
#include "hetsep/config_io.hpp"
#include "hetsep/corpus.hpp"
#include "hetsep/errors.hpp"
#include "hetsep/evaluation.hpp"
#include "hetsep/experiment.hpp"
#include "hetsep/model.hpp"
#include "hetsep/signal.hpp"
#include "hetsep/training.hpp"

namespace py = pybind11;
using namespace hetsep;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Waveform to_waveform(const Array& a, int sample_rate) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D array");
  return Waveform(std::vector<double>(a.data(), a.data() + a.size()), sample_rate);
}

Array to_array(const Waveform& w) {
  Array out(py::ssize_t(w.size()));
  std::copy(w.samples.begin(), w.samples.end(), out.mutable_data());
  return out;
}

Array to_array(std::span<const double> v) {
  Array out(py::ssize_t(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ModelConfig model_config_from(const py::dict& d) {
  const auto text = py::module_::import("json").attr("dumps")(d).cast<std::string>();
  ModelConfig c = nlohmann::json::parse(text).get<ModelConfig>();
  c.validate();
  return c;
}

py::dict sample_dict(const MixtureSample& s) {
  py::dict d;
  d["mixture"] = to_array(s.mixture);
  d["target"] = to_array(s.target);
  d["other"] = to_array(s.other);
  d["concept"] = std::string(concept_name(s.query));
  d["degeneracy"] = std::string(degeneracy_name(s.degeneracy));
  d["domain"] = std::string(to_string(s.domain));
  d["snr_db"] = s.snr_db;
  d["overlap"] = s.overlap;
  d["index"] = s.index;
  return d;
}

class PySeparator {
 public:
  PySeparator(const py::dict& config, std::uint64_t seed) : model_(model_config_from(config), seed) {}
  explicit PySeparator(Separator<float> m) : model_(std::move(m)) {}

  py::tuple forward(const Array& x, const std::string& v, int sample_rate) const {
    const auto out = model_.forward(to_waveform(x, sample_rate), concept_from_name(v));
    return py::make_tuple(to_array(out.first), to_array(out.second));
  }
  py::tuple forward_unconditional(const Array& x, int sample_rate) const {
    const auto out = model_.forward_unconditional(to_waveform(x, sample_rate));
    return py::make_tuple(to_array(out.first), to_array(out.second));
  }
  std::size_t parameter_count() const { return model_.parameter_count(); }
  bool conditioned() const { return model_.config().conditioned; }
  void save(const std::filesystem::path& p) const { save_checkpoint(make_checkpoint(model_, 0, 0), p); }

 private:
  Separator<float> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Heterogeneous-condition speech separation (C++ core)";

  static py::exception<Error> base(m, "HetsepError", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<DataError> data_error(m, "DataError", base.ptr());
  static py::exception<IoError> io_error(m, "IoError", base.ptr());
  static py::exception<NumericError> numeric_error(m, "NumericError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const IoError& e) {
      py::set_error(io_error, e.what());
    } catch (const NumericError& e) {
      py::set_error(numeric_error, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.attr("VOCABULARY") = [] {
    std::vector<std::string> names;
    for (Concept v : kAllConcepts) names.emplace_back(concept_name(v));
    return names;
  }();

  m.def("si_sdr", [](const Array& est, const Array& ref) {
    return si_sdr(to_waveform(est, kDefaultSampleRate), to_waveform(ref, kDefaultSampleRate));
  }, py::arg("estimate"), py::arg("reference"));

  m.def("aggregate_median", [](const std::vector<double>& scores) { return aggregate_median(scores); },
        py::arg("scores"));

  m.def("conditional_loss", [](const Array& et, const Array& eo, const Array& st, const Array& so) {
    return conditional_loss(std::span(et.data(), std::size_t(et.size())), std::span(eo.data(), std::size_t(eo.size())),
                            std::span(st.data(), std::size_t(st.size())), std::span(so.data(), std::size_t(so.size())));
  });

  m.def("pit_loss", [](const Array& e1, const Array& e2, const Array& r1, const Array& r2) {
    const SeparatorOutput out{to_waveform(e1, kDefaultSampleRate), to_waveform(e2, kDefaultSampleRate)};
    const auto r = pit_loss(out, to_waveform(r1, kDefaultSampleRate), to_waveform(r2, kDefaultSampleRate));
    return py::make_tuple(r.value, py::make_tuple(r.assignment[0], r.assignment[1]));
  });

  m.def("encode_concept", [](const std::string& v) {
    const auto c = encode_concept(concept_from_name(v));
    return std::vector<int>(c.begin(), c.end());
  });

  m.def("count_parameters", [](const py::dict& config) { return count_parameters(model_config_from(config)); });
  m.def("film_parameter_count", [](const py::dict& config) { return film_parameter_count(model_config_from(config)); });
  m.def("frame_count", [](std::size_t samples, const py::dict& config) {
    return frame_count(samples, model_config_from(config));
  });

  m.def("image_source_rir", [](std::array<double, 3> dims, double rt60, std::array<double, 3> source,
                               int max_order, int sample_rate) {
    RoomSpec room{dims[0], dims[1], dims[2], rt60, {dims[0] / 2, dims[1] / 2, kMicrophoneHeight}};
    return to_array(image_source_rir(room, {source[0], source[1], source[2]}, max_order, sample_rate).taps);
  }, py::arg("dims"), py::arg("rt60"), py::arg("source"), py::arg("max_order") = kDefaultReflectionOrder,
     py::arg("sample_rate") = kDefaultSampleRate);

  m.def("render_toy_voice", [](const std::string& ref) { return to_array(render_toy_voice(ToyVoice::from_ref(ref))); });

  m.def("synth_toy_corpus", [](std::uint64_t seed, int n_speakers, int records_per_speaker) {
    ToyCorpusOptions o;
    o.seed = seed;
    o.n_speakers = n_speakers;
    o.records_per_speaker = records_per_speaker;
    py::list out;
    for (const auto& r : synth_toy_corpus(o).records) {
      py::dict d;
      d["record_id"] = r.record_id;
      d["speaker_id"] = r.speaker_id;
      d["audio_ref"] = r.audio_ref;
      d["gender"] = r.gender ? py::cast(std::string(to_string(*r.gender))) : py::none();
      d["language"] = r.language ? py::cast(std::string(to_string(*r.language))) : py::none();
      d["duration"] = r.duration;
      out.append(d);
    }
    return out;
  }, py::arg("seed") = 0, py::arg("n_speakers") = 40, py::arg("records_per_speaker") = 8);

  py::class_<PySeparator>(m, "Separator")
      .def(py::init<const py::dict&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) {
        return PySeparator(model_from_checkpoint<float>(load_checkpoint(p)));
      })
      .def("forward", &PySeparator::forward, py::arg("x"), py::arg("concept"),
           py::arg("sample_rate") = kDefaultSampleRate)
      .def("forward_unconditional", &PySeparator::forward_unconditional, py::arg("x"),
           py::arg("sample_rate") = kDefaultSampleRate)
      .def("save", &PySeparator::save)
      .def_property_readonly("parameter_count", &PySeparator::parameter_count)
      .def_property_readonly("conditioned", &PySeparator::conditioned);

  py::class_<ExperimentConfig>(m, "Experiment")
      .def_static("load", &load_experiment)
      .def_property_readonly("name", [](const ExperimentConfig& c) { return c.name; })
      .def_property_readonly("hash", &ExperimentConfig::hash)
      .def_property_readonly("output_dir", [](const ExperimentConfig& c) { return c.output_dir; })
      .def("eval_set", [](const ExperimentConfig& c, const std::string& v, std::optional<std::size_t> size) {
        ExperimentConfig copy = c;
        if (size) copy.eval.size = *size;
        py::list out;
        for (const auto& s : build_eval_set(copy, concept_from_name(v))) out.append(sample_dict(s));
        return out;
      }, py::arg("concept"), py::arg("size") = py::none())
      .def("train", [](const ExperimentConfig& c) {
        py::gil_scoped_release release;
        return run_training(c).size();
      })
      .def("evaluate", [](const ExperimentConfig& c, const std::filesystem::path& ckpt) {
        return run_evaluation(c, ckpt).to_json();
      });
}
