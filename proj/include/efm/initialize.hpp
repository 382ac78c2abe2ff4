#ifndef EFM_INITIALIZE_HPP
#define EFM_INITIALIZE_HPP

#include "efm/model_core.hpp"

namespace efm {

struct Initialization {
  EFMParams params;
  Matrix lambda;  // n x q starting factors
};

/// Starting point shared by all optimizers: SVD of the link-transformed,
/// weight-masked, column-centered data (observations clipped into the mean
/// domain interior, missing entries imputed at the column center), followed
/// by a Pearson dispersion estimate for free-dispersion families.
Initialization svd_initialize(const Dataset& data, const QuasiFamily& fam,
                              Eigen::Index q);

}  // namespace efm

#endif  // EFM_INITIALIZE_HPP
