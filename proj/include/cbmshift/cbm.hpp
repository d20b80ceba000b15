#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "cbmshift/common.hpp"

namespace cbmshift {

struct CbmDims {
  int feature_dim = 0;   // d
  int hidden_dim = 16;   // H
  int num_concepts = 0;  // L
  int num_classes = 0;   // K

  bool operator==(const CbmDims&) const = default;
};

/// Loss weighting for joint training. The concept term weight and the label
/// smoothing coefficient are distinct knobs (they are often conflated in
/// shorthand write-ups).
struct LossConfig {
  double concept_loss_weight = 1.0;  // weight on the concept BCE term
  double label_smoothing = 0.05;     // applied to the class loss only
};

/// Concept predictor g: one hidden ReLU layer feeding per-concept sigmoid
/// logits. Classifier f: a linear layer over the concept activations.
struct CbmParameters {
  Matrix hidden_w;               // feature_dim x hidden_dim
  std::vector<double> hidden_b;  // hidden_dim
  Matrix concept_w;              // hidden_dim x num_concepts
  std::vector<double> concept_b; // num_concepts
  Matrix class_w;                // num_concepts x num_classes
  std::vector<double> class_b;   // num_classes

  CbmDims dims() const;
  static CbmParameters zeros(const CbmDims& dims);

  /// Parameter arrays in a fixed order; the optimizer walks these.
  std::array<std::vector<double>*, 6> arrays();
  std::array<const std::vector<double>*, 6> arrays() const;
};

struct ForwardTrace {
  std::vector<double> hidden_pre;      // before ReLU
  std::vector<double> hidden;          // after ReLU
  std::vector<double> concept_logits;
  std::vector<double> concepts;        // sigmoid activations, in [0,1]
  std::vector<double> class_logits;
  std::vector<double> class_probs;     // softmax, sums to 1
};

ForwardTrace forward(const CbmParameters& params, std::span<const double> features);

/// Class logits for an already-computed (possibly masked) concept vector.
/// Shared by forward and masked inference so both take the identical
/// floating-point path.
std::vector<double> classifier_logits(const CbmParameters& params,
                                      std::span<const double> concepts);

std::vector<double> softmax(std::span<const double> logits);

/// phi * mean-BCE(concepts, labels) + smoothed cross-entropy(class).
/// Probabilities are clamped at 1e-12 before logarithms.
double joint_loss(const ForwardTrace& trace, std::span<const double> concept_labels,
                  int class_label, const LossConfig& cfg);

/// Class loss alone (used when no concept labels exist).
double class_loss(const ForwardTrace& trace, int class_label, const LossConfig& cfg);

/// Analytic gradient of the joint loss with respect to every parameter.
/// Pass concept_labels == nullptr to drop the concept term entirely
/// (fine-tuning with image-level labels only). Returns the gradient in a
/// parameter-shaped container; optionally reports the loss of this sample.
CbmParameters backward(const CbmParameters& params, std::span<const double> features,
                       const std::vector<double>* concept_labels, int class_label,
                       const LossConfig& cfg, double* loss_out = nullptr);

void save_params(const CbmParameters& params, const std::filesystem::path& path);
CbmParameters load_params(const std::filesystem::path& path);
std::string params_to_json_string(const CbmParameters& params);
CbmParameters params_from_json_string(const std::string& text);

}  // namespace cbmshift
