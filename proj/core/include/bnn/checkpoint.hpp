#pragma once

#include <string>

#include "bnn/nn.hpp"
#include "bnn/train.hpp"

namespace bnn {

// Checkpoint container, little-endian binary:
//   magic "BNNC", u32 version (1), u8 kind (0 point / 1 posterior),
//   f64 activation slope, u32 layer count,
//   per layer: u8 kind (0 dense, 1 conv, 2 maxpool, 3 flatten),
//              4 x u32 dims (dense: out,in,0,0; conv: oc,ic,kh,kw),
//   payload: f64 parameters in param_tensors() order
//            (point: one pass; posterior: mu pass then rho pass).

void save_point_network(const PointNetwork& net, const std::string& path);
PointNetwork load_point_network(const std::string& path);

void save_posterior(const VariationalPosterior& vp, const std::string& path);
VariationalPosterior load_posterior(const std::string& path);

/// kind byte of a checkpoint file without loading the payload
bool checkpoint_is_posterior(const std::string& path);

}  // namespace bnn
