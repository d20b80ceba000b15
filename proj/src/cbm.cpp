#include "cbmshift/cbm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace cbmshift {

using nlohmann::json;

namespace {

constexpr double kProbEps = 1e-12;
constexpr const char* kParamsVersion = "cbm-params-v1";

double clamped_log(double p) { return std::log(std::max(p, kProbEps)); }

void check_label(int label, int count, const char* what) {
  if (label < 0 || label >= count) {
    throw InputError(std::string(what) + " label " + std::to_string(label) +
                     " out of range [0, " + std::to_string(count) + ")");
  }
}

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != static_cast<size_t>(m.rows) * static_cast<size_t>(m.cols)) {
    throw InputError("matrix payload size does not match its declared shape");
  }
  return m;
}

}  // namespace

CbmDims CbmParameters::dims() const {
  return CbmDims{hidden_w.rows, hidden_w.cols, concept_w.cols, class_w.cols};
}

CbmParameters CbmParameters::zeros(const CbmDims& dims) {
  CbmParameters p;
  p.hidden_w = Matrix(dims.feature_dim, dims.hidden_dim);
  p.hidden_b.assign(static_cast<size_t>(dims.hidden_dim), 0.0);
  p.concept_w = Matrix(dims.hidden_dim, dims.num_concepts);
  p.concept_b.assign(static_cast<size_t>(dims.num_concepts), 0.0);
  p.class_w = Matrix(dims.num_concepts, dims.num_classes);
  p.class_b.assign(static_cast<size_t>(dims.num_classes), 0.0);
  return p;
}

std::array<std::vector<double>*, 6> CbmParameters::arrays() {
  return {&hidden_w.data, &hidden_b, &concept_w.data, &concept_b, &class_w.data, &class_b};
}

std::array<const std::vector<double>*, 6> CbmParameters::arrays() const {
  return {&hidden_w.data, &hidden_b, &concept_w.data, &concept_b, &class_w.data, &class_b};
}

std::vector<double> classifier_logits(const CbmParameters& params,
                                      std::span<const double> concepts) {
  const int num_concepts = params.class_w.rows;
  const int num_classes = params.class_w.cols;
  if (static_cast<int>(concepts.size()) != num_concepts) {
    throw InputError("concept vector length " + std::to_string(concepts.size()) +
                     " does not match classifier input " + std::to_string(num_concepts));
  }
  std::vector<double> logits(params.class_b);
  for (int l = 0; l < num_concepts; ++l) {
    const double c = concepts[static_cast<size_t>(l)];
    for (int k = 0; k < num_classes; ++k) {
      logits[static_cast<size_t>(k)] += c * params.class_w(l, k);
    }
  }
  return logits;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> probs(logits.size());
  double max_logit = logits[0];
  for (double z : logits) max_logit = std::max(max_logit, z);
  double sum = 0.0;
  for (size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - max_logit);
    sum += probs[k];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

ForwardTrace forward(const CbmParameters& params, std::span<const double> features) {
  const CbmDims dims = params.dims();
  if (static_cast<int>(features.size()) != dims.feature_dim) {
    throw InputError("feature vector length " + std::to_string(features.size()) +
                     " does not match model input " + std::to_string(dims.feature_dim));
  }
  if (!all_finite(features)) throw InputError("non-finite feature value");

  ForwardTrace trace;
  trace.hidden_pre.assign(params.hidden_b.begin(), params.hidden_b.end());
  for (int d = 0; d < dims.feature_dim; ++d) {
    const double x = features[static_cast<size_t>(d)];
    for (int h = 0; h < dims.hidden_dim; ++h) {
      trace.hidden_pre[static_cast<size_t>(h)] += x * params.hidden_w(d, h);
    }
  }
  trace.hidden.resize(trace.hidden_pre.size());
  for (size_t h = 0; h < trace.hidden.size(); ++h) {
    trace.hidden[h] = std::max(trace.hidden_pre[h], 0.0);
  }

  trace.concept_logits.assign(params.concept_b.begin(), params.concept_b.end());
  for (int h = 0; h < dims.hidden_dim; ++h) {
    const double a = trace.hidden[static_cast<size_t>(h)];
    if (a == 0.0) continue;
    for (int l = 0; l < dims.num_concepts; ++l) {
      trace.concept_logits[static_cast<size_t>(l)] += a * params.concept_w(h, l);
    }
  }
  trace.concepts.resize(trace.concept_logits.size());
  for (size_t l = 0; l < trace.concepts.size(); ++l) {
    trace.concepts[l] = sigmoid(trace.concept_logits[l]);
  }

  trace.class_logits = classifier_logits(params, trace.concepts);
  trace.class_probs = softmax(trace.class_logits);
  return trace;
}

double class_loss(const ForwardTrace& trace, int class_label, const LossConfig& cfg) {
  const int num_classes = static_cast<int>(trace.class_probs.size());
  check_label(class_label, num_classes, "class");
  const double s = cfg.label_smoothing;
  const double off_target = s / static_cast<double>(num_classes);
  double loss = 0.0;
  for (int k = 0; k < num_classes; ++k) {
    const double target = off_target + (k == class_label ? 1.0 - s : 0.0);
    loss -= target * clamped_log(trace.class_probs[static_cast<size_t>(k)]);
  }
  return loss;
}

double joint_loss(const ForwardTrace& trace, std::span<const double> concept_labels,
                  int class_label, const LossConfig& cfg) {
  const int num_concepts = static_cast<int>(trace.concepts.size());
  if (static_cast<int>(concept_labels.size()) != num_concepts) {
    throw InputError("concept label vector length mismatch");
  }
  double concept_bce = 0.0;
  for (int l = 0; l < num_concepts; ++l) {
    const double c = concept_labels[static_cast<size_t>(l)];
    const double a = trace.concepts[static_cast<size_t>(l)];
    concept_bce -= c * clamped_log(a) + (1.0 - c) * clamped_log(1.0 - a);
  }
  concept_bce /= static_cast<double>(num_concepts);
  return cfg.concept_loss_weight * concept_bce + class_loss(trace, class_label, cfg);
}

CbmParameters backward(const CbmParameters& params, std::span<const double> features,
                       const std::vector<double>* concept_labels, int class_label,
                       const LossConfig& cfg, double* loss_out) {
  const CbmDims dims = params.dims();
  const ForwardTrace trace = forward(params, features);
  check_label(class_label, dims.num_classes, "class");
  if (concept_labels != nullptr &&
      static_cast<int>(concept_labels->size()) != dims.num_concepts) {
    throw InputError("concept label vector length mismatch");
  }

  if (loss_out != nullptr) {
    *loss_out = concept_labels != nullptr
                    ? joint_loss(trace, *concept_labels, class_label, cfg)
                    : class_loss(trace, class_label, cfg);
  }

  CbmParameters grad = CbmParameters::zeros(dims);

  // Softmax cross-entropy against the smoothed target: dL/dz_k = p_k - t_k.
  const double s = cfg.label_smoothing;
  const double off_target = s / static_cast<double>(dims.num_classes);
  std::vector<double> d_class_logits(static_cast<size_t>(dims.num_classes));
  for (int k = 0; k < dims.num_classes; ++k) {
    const double target = off_target + (k == class_label ? 1.0 - s : 0.0);
    d_class_logits[static_cast<size_t>(k)] = trace.class_probs[static_cast<size_t>(k)] - target;
  }

  for (int l = 0; l < dims.num_concepts; ++l) {
    const double c = trace.concepts[static_cast<size_t>(l)];
    for (int k = 0; k < dims.num_classes; ++k) {
      grad.class_w(l, k) = c * d_class_logits[static_cast<size_t>(k)];
    }
  }
  grad.class_b = d_class_logits;

  // Back through the bottleneck. The class path contributes through the
  // sigmoid derivative; the concept BCE contributes (a - c)/L per concept
  // (sigmoid + BCE cancel into that form).
  std::vector<double> d_concept_logits(static_cast<size_t>(dims.num_concepts), 0.0);
  for (int l = 0; l < dims.num_concepts; ++l) {
    double d_concept = 0.0;
    for (int k = 0; k < dims.num_classes; ++k) {
      d_concept += params.class_w(l, k) * d_class_logits[static_cast<size_t>(k)];
    }
    const double a = trace.concepts[static_cast<size_t>(l)];
    double dz = d_concept * a * (1.0 - a);
    if (concept_labels != nullptr) {
      dz += cfg.concept_loss_weight * (a - (*concept_labels)[static_cast<size_t>(l)]) /
            static_cast<double>(dims.num_concepts);
    }
    d_concept_logits[static_cast<size_t>(l)] = dz;
  }

  for (int h = 0; h < dims.hidden_dim; ++h) {
    const double a = trace.hidden[static_cast<size_t>(h)];
    if (a == 0.0) continue;
    for (int l = 0; l < dims.num_concepts; ++l) {
      grad.concept_w(h, l) = a * d_concept_logits[static_cast<size_t>(l)];
    }
  }
  grad.concept_b = d_concept_logits;

  std::vector<double> d_hidden_pre(static_cast<size_t>(dims.hidden_dim), 0.0);
  for (int h = 0; h < dims.hidden_dim; ++h) {
    if (trace.hidden_pre[static_cast<size_t>(h)] <= 0.0) continue;  // ReLU gate
    double acc = 0.0;
    for (int l = 0; l < dims.num_concepts; ++l) {
      acc += params.concept_w(h, l) * d_concept_logits[static_cast<size_t>(l)];
    }
    d_hidden_pre[static_cast<size_t>(h)] = acc;
  }

  for (int d = 0; d < dims.feature_dim; ++d) {
    const double x = features[static_cast<size_t>(d)];
    for (int h = 0; h < dims.hidden_dim; ++h) {
      grad.hidden_w(d, h) = x * d_hidden_pre[static_cast<size_t>(h)];
    }
  }
  grad.hidden_b = d_hidden_pre;
  return grad;
}

std::string params_to_json_string(const CbmParameters& params) {
  const CbmDims dims = params.dims();
  json j{
      {"version", kParamsVersion},
      {"feature_dim", dims.feature_dim},
      {"hidden_dim", dims.hidden_dim},
      {"num_concepts", dims.num_concepts},
      {"num_classes", dims.num_classes},
      {"hidden_w", matrix_to_json(params.hidden_w)},
      {"hidden_b", params.hidden_b},
      {"concept_w", matrix_to_json(params.concept_w)},
      {"concept_b", params.concept_b},
      {"class_w", matrix_to_json(params.class_w)},
      {"class_b", params.class_b},
  };
  return j.dump(2);
}

CbmParameters params_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed parameters JSON: ") + e.what());
  }
  if (j.value("version", "") != kParamsVersion) {
    throw InputError("parameters file version mismatch; expected " +
                     std::string(kParamsVersion));
  }
  CbmParameters p;
  p.hidden_w = matrix_from_json(j.at("hidden_w"));
  p.hidden_b = j.at("hidden_b").get<std::vector<double>>();
  p.concept_w = matrix_from_json(j.at("concept_w"));
  p.concept_b = j.at("concept_b").get<std::vector<double>>();
  p.class_w = matrix_from_json(j.at("class_w"));
  p.class_b = j.at("class_b").get<std::vector<double>>();

  const CbmDims dims{j.at("feature_dim").get<int>(), j.at("hidden_dim").get<int>(),
                     j.at("num_concepts").get<int>(), j.at("num_classes").get<int>()};
  if (p.dims() != dims || static_cast<int>(p.hidden_b.size()) != dims.hidden_dim ||
      static_cast<int>(p.concept_b.size()) != dims.num_concepts ||
      static_cast<int>(p.class_b.size()) != dims.num_classes ||
      p.concept_w.rows != dims.hidden_dim || p.class_w.rows != dims.num_concepts) {
    throw InputError("parameters file dimensions are inconsistent");
  }
  for (const auto* arr : p.arrays()) {
    if (!all_finite(*arr)) throw InputError("parameters file contains non-finite values");
  }
  return p;
}

void save_params(const CbmParameters& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write parameters file: " + path.string());
  out << params_to_json_string(params) << "\n";
}

CbmParameters load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open parameters file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return params_from_json_string(text);
}

}  // namespace cbmshift
