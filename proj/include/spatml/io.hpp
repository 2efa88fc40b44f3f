#ifndef SPATML_IO_HPP
#define SPATML_IO_HPP

#include <memory>
#include <string>

#include "spatml/dataset.hpp"
#include "spatml/eval.hpp"
#include "spatml/model.hpp"
#include "spatml/spatrf.hpp"
#include "spatml/synthetic.hpp"
#include "spatml/ukpls.hpp"
#include "spatml/varimp.hpp"

namespace spatml {

/* File formats.
 *
 * Dataset CSV: header row with required columns site_id,x,y,outcome (any
 * positions); every other column is a covariate.  UTF-8, '.' decimal.
 *
 * Model JSON: {"format_version": 1, "kind": "ukpls"|"spatrf", ...} with
 * everything prediction needs: parameters, training sites, residuals,
 * transform/link tags.  Serialization is exact (shortest round-trip doubles),
 * so save -> load -> predict reproduces in-process predictions bitwise. */

inline constexpr int kFormatVersion = 1;

Dataset read_dataset_csv(const std::string& path, Transform transform = Transform::identity,
                         Metric metric = Metric::euclidean);
void write_dataset_csv(const Dataset& data, const std::string& path);

void save_model(const AdditiveSpatialModel& model, const std::string& path);
std::unique_ptr<AdditiveSpatialModel> load_model(const std::string& path);

void write_importance_csv(const ImportanceTrajectory& traj, const std::string& path);
void write_importance_report(const ImportanceTrajectory& traj, const ContrastReport& contrasts,
                             const std::string& path);
void write_cv_json(const CvResult& cv, const std::string& model_name, const std::string& path);
void write_cv_errors_csv(const CvResult& cv, const Dataset& data, const std::string& path);
void write_synthetic_sidecar(const SyntheticSpec& spec, const SyntheticData& draw,
                             const std::string& path);

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace spatml

#endif  // SPATML_IO_HPP
