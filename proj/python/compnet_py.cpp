#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "compnet/checkpoint.hpp"
#include "compnet/cli.hpp"
#include "compnet/error.hpp"
#include "compnet/experiment.hpp"
#include "compnet/layers.hpp"
#include "compnet/ops.hpp"
#include "compnet/synthetic.hpp"

namespace py = pybind11;
using compnet::ad::Tensor;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  compnet::ad::Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const compnet::train::Metrics& m) {
  py::dict d;
  d["loss"] = m.loss;
  d["accuracy"] = m.accuracy;
  d["n"] = m.n;
  return d;
}

std::vector<std::size_t> all_of(const compnet::data::Dataset& ds) { return ds.all_indices(); }

}  // namespace

PYBIND11_MODULE(_compnet, m) {
  m.doc() = "CompNet core: autodiff, layers, models, data and training";

  static py::exception<compnet::ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<compnet::DataError> data_error(m, "DataError", PyExc_ValueError);
  static py::exception<compnet::FormatError> checkpoint_error(m, "CheckpointError", PyExc_IOError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const compnet::ConfigError& e) {
      config_error(e.what());
    } catch (const compnet::DataError& e) {
      data_error(e.what());
    } catch (const compnet::FormatError& e) {
      checkpoint_error(e.what());
    } catch (const compnet::IoError& e) {
      PyErr_SetString(PyExc_IOError, e.what());
    } catch (const compnet::ShapeError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const compnet::VariantError& e) {
      PyErr_SetString(PyExc_TypeError, e.what());
    } catch (const compnet::NumericError& e) {
      PyErr_SetString(PyExc_ArithmeticError, e.what());
    }
  });

  using compnet::data::SynthSpec;
  py::class_<SynthSpec>(m, "SynthSpec")
      .def(py::init<>())
      .def_readwrite("name", &SynthSpec::name)
      .def_readwrite("n_samples", &SynthSpec::n_samples)
      .def_readwrite("image_shape", &SynthSpec::image_shape)
      .def_readwrite("n_features", &SynthSpec::n_features)
      .def_readwrite("n_informative", &SynthSpec::n_informative)
      .def_readwrite("n_classes", &SynthSpec::n_classes)
      .def_readwrite("image_reliability", &SynthSpec::image_reliability)
      .def_readwrite("feature_reliability", &SynthSpec::feature_reliability)
      .def_readwrite("pixel_noise", &SynthSpec::pixel_noise)
      .def_readwrite("class_balance", &SynthSpec::class_balance)
      .def_readwrite("seed", &SynthSpec::seed);

  using compnet::data::Dataset;
  py::class_<Dataset>(m, "Dataset")
      .def_readonly("name", &Dataset::name)
      .def_readonly("image_shape", &Dataset::image_shape)
      .def_readonly("n_features", &Dataset::n_features)
      .def_readonly("n_classes", &Dataset::n_classes)
      .def("__len__", &Dataset::size)
      .def("images", [](const Dataset& ds) { return to_array(ds.images(all_of(ds))); })
      .def("features", [](const Dataset& ds) { return to_array(ds.features(all_of(ds))); })
      .def("labels", [](const Dataset& ds) { return ds.labels(all_of(ds)); })
      .def("ids", [](const Dataset& ds) {
        std::vector<std::string> ids;
        for (const auto& s : ds.samples) ids.push_back(s.id);
        return ids;
      })
      .def("informative_features", [](const Dataset& ds) { return compnet::data::informative_features(ds); });

  m.def("generate_synthetic", &compnet::data::generate_synthetic, py::arg("spec"));
  m.def("save_dataset", &compnet::data::save_dataset, py::arg("dataset"), py::arg("directory"));
  m.def("load_dataset", &compnet::data::load_dataset, py::arg("manifest"));
  m.def(
      "split",
      [](const Dataset& ds, double fraction, std::uint64_t seed, bool stratified) {
        return compnet::data::split(ds, {fraction, seed, stratified});
      },
      py::arg("dataset"), py::arg("train_fraction") = 0.75, py::arg("seed") = 0, py::arg("stratified") = true);

  using compnet::data::Normalizer;
  py::class_<Normalizer>(m, "Normalizer")
      .def_static("fit", &Normalizer::fit, py::arg("train"))
      .def("apply", py::overload_cast<const Dataset&>(&Normalizer::apply, py::const_))
      .def_property_readonly("mean", &Normalizer::mean)
      .def_property_readonly("std", &Normalizer::stddev);

  using compnet::ModelConfig;
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("image_shape", &ModelConfig::image_shape)
      .def_readwrite("n_classes", &ModelConfig::n_classes)
      .def_readwrite("n_features", &ModelConfig::n_features)
      .def_readwrite("conv_filters", &ModelConfig::conv_filters)
      .def_readwrite("kernel_size", &ModelConfig::kernel_size)
      .def_readwrite("dense_hidden", &ModelConfig::dense_hidden)
      .def_readwrite("learned_width", &ModelConfig::learned_width)
      .def_readwrite("leaky_slope", &ModelConfig::leaky_slope)
      .def_readwrite("seed", &ModelConfig::seed)
      .def_property(
          "fusion_kind", [](const ModelConfig& c) { return compnet::to_string(c.fusion); },
          [](ModelConfig& c, const std::string& k) { c.fusion = compnet::parse_fusion_kind(k); })
      .def("validate", &ModelConfig::validate);

  using compnet::Model;
  py::class_<Model>(m, "Model")
      .def(py::init<ModelConfig>(), py::arg("config"))
      .def_property_readonly("config", &Model::config)
      .def("parameter_count", &Model::parameter_count)
      .def("parameters",
           [](const Model& model) {
             py::dict d;
             for (const auto& p : model.parameters()) d[py::str(p.name)] = to_array(p.value);
             return d;
           })
      .def("forward",
           [](const Model& model, const Array& images, const Array& features) {
             return to_array(model.forward(to_tensor(images), to_tensor(features)));
           })
      .def("predict",
           [](const Model& model, const Array& images, const Array& features) {
             return model.predict(to_tensor(images), to_tensor(features));
           })
      .def("extract_weight_matrices",
           [](const Model& model, const Array& images) {
             return to_array(model.extract_weight_matrices(to_tensor(images)));
           });

  m.def(
      "feature_importance",
      [](const Model& model, const Dataset& ds) {
        const auto r = compnet::feature_importance(model, ds);
        return py::make_tuple(r.importance, r.ranking);
      },
      py::arg("model"), py::arg("dataset"), "Returns (importance[class][feature], ranking[class]).");

  m.def(
      "fusion_weight_matrix",
      [](const Array& learned, std::size_t classes, const Array& features) {
        compnet::ad::Tape tape;
        const auto out = compnet::nn::fusion_weight_matrix(tape.constant(to_tensor(learned)),
                                                           compnet::nn::FusionShape(classes, features.shape(1)),
                                                           tape.constant(to_tensor(features)));
        return to_array(out.value());
      },
      py::arg("learned"), py::arg("classes"), py::arg("features"));

  using compnet::train::TrainConfig;
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("shuffle", &TrainConfig::shuffle)
      .def_readwrite("eval_every", &TrainConfig::eval_every)
      .def_readwrite("patience", &TrainConfig::patience);

  using compnet::train::OptimState;
  py::class_<OptimState>(m, "OptimState")
      .def_static("for_model", &OptimState::for_model, py::arg("model"))
      .def_readonly("epoch", &OptimState::epoch);

  m.def(
      "train_epoch",
      [](Model& model, const Dataset& train, const TrainConfig& cfg, OptimState& state) {
        return metrics_dict(compnet::train::train_epoch(model, train, cfg, state));
      },
      py::arg("model"), py::arg("train"), py::arg("config"), py::arg("state"),
      "One pass over shuffled minibatches; updates the model and state in place.");

  m.def(
      "fit",
      [](Model& model, const Dataset& train, const Dataset& test, const TrainConfig& cfg) {
        auto state = compnet::train::OptimState::for_model(model);
        const auto history = compnet::train::fit(model, train, &test, cfg, state);
        py::list rows;
        for (const auto& e : history.entries) {
          py::dict row;
          row["epoch"] = e.epoch;
          row["train"] = metrics_dict(e.train_metrics());
          row["test"] = e.test ? py::object(metrics_dict(*e.test)) : py::none();
          rows.append(row);
        }
        return rows;
      },
      py::arg("model"), py::arg("train"), py::arg("test"), py::arg("config"),
      "Trains in place from a fresh optimizer state; returns per-epoch metrics.");

  m.def(
      "evaluate", [](const Model& model, const Dataset& ds) { return metrics_dict(compnet::train::evaluate(model, ds)); },
      py::arg("model"), py::arg("dataset"));

  m.def(
      "save_checkpoint",
      [](const std::filesystem::path& path, const Model& model) {
        compnet::train::save_checkpoint(path, model, compnet::train::OptimState::for_model(model));
      },
      py::arg("path"), py::arg("model"));
  m.def(
      "load_checkpoint", [](const std::filesystem::path& path) { return compnet::train::load_checkpoint(path).model; },
      py::arg("path"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = compnet::cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line in-process; returns (exit_code, stdout, stderr).");
}
