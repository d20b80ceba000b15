#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "cbmshift/cbm.hpp"
#include "cbmshift/concept_memory.hpp"
#include "cbmshift/data_model.hpp"

namespace cbmshift {

/// Concept activations of the labeled OOD probe set, grouped by class.
/// Classes may be empty (absent from the probe set).
struct OodActivationTable {
  int num_classes = 0;
  int num_concepts = 0;
  std::vector<std::vector<std::vector<double>>> by_class;

  int count(int class_index) const {
    return static_cast<int>(by_class[static_cast<size_t>(class_index)].size());
  }
};

struct IdentificationConfig {
  double tau = 1.4;                      // stability factor; must exceed 1
  double sigma_floor = 1e-6;             // guards constant validation concepts
  double discriminative_threshold = 0.5; // in-domain mean above this marks discriminative
  double amplification_factor = 2.0;     // applied to under-activated concepts

  void validate() const;
};

/// Stability statistics for one (class, concept) cell.
struct CellDiagnostic {
  int class_index = 0;
  int concept_index = 0;
  double concat_std = 0.0;  // population std over the ID mean plus N_k OOD values
  double threshold = 0.0;   // tau * max(sigma_ID, sigma_floor)
  bool flagged = false;
};

struct ConfusionReport {
  int num_classes = 0;
  int num_concepts = 0;
  std::vector<std::vector<int>> confusion;        // per class, sorted concept indices
  std::vector<int> misactivated;                  // flagged for more than half the classes
  std::vector<std::vector<int>> under_activated;  // per class, discriminative leftovers
  std::vector<int> skipped_classes;               // classes with no OOD probe samples
  std::vector<CellDiagnostic> diagnostics;
  double tau = 0.0;

  bool is_confusing(int class_index, int concept_index) const;
  /// Union of the per-class under-activated sets, sorted.
  std::vector<int> amplified_concepts() const;
};

/// Per-concept multiplier over {0, 1, amplification}: masked concepts drop to
/// zero, under-activated discriminative concepts get amplified, the rest pass
/// through unchanged.
struct ConceptMask {
  std::vector<double> values;
  ConfusionReport provenance;

  static ConceptMask identity(int num_concepts);
};

/// One forward pass per labeled OOD sample; activations grouped by class.
/// No parameter updates happen here.
OodActivationTable collect_ood_activations(const CbmParameters& params,
                                           std::span<const Sample> ood_samples, int num_classes);

/// Builds the same table from externally produced activation records.
OodActivationTable table_from_records(std::span<const ActivationRecord> records, int num_classes,
                                      int num_concepts);

/// The stability test: concept i confuses class k when the population std of
/// {ID mean} + {N_k OOD activations} reaches tau times the in-domain std.
/// Misactivated concepts confuse strictly more than half of all classes; the
/// remaining flagged concepts with in-domain mean above the discriminative
/// threshold are under-activated for that class.
ConfusionReport identify_confusion(const ConceptMemory& memory, const OodActivationTable& ood,
                                   const IdentificationConfig& cfg);

ConceptMask build_mask(const ConfusionReport& report, const IdentificationConfig& cfg,
                       int num_concepts);

struct MaskedPrediction {
  int predicted_class = 0;
  std::vector<double> class_probs;
  std::vector<double> masked_concepts;  // may exceed 1 after amplification
};

/// Classifies with the mask applied element-wise at the bottleneck. With the
/// identity mask this reproduces the unmasked forward pass bit for bit.
MaskedPrediction masked_predict(const CbmParameters& params, std::span<const double> features,
                                const ConceptMask& mask);

void save_mask(const ConceptMask& mask, const std::filesystem::path& path);
ConceptMask load_mask(const std::filesystem::path& path);

}  // namespace cbmshift
