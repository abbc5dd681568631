// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/model.hpp"

#include <sstream>

namespace mms {

template <typename T>
MmsFormer<T>::MmsFormer(const ModelConfig& config) : config_(config) {
  config_.validate();
  fusion_config_ = config_.resolved_fusion();
  Rng rng(config_.seed);
  ParamScope<T> root(params_, rng);
  for (Index m = 0; m < config_.num_modalities; ++m) {
    encoders.emplace_back(root.child("encoder." + std::to_string(m)), config_.encoder);
  }
  std::array<Index, kNumStages> widths{};
  for (std::size_t i = 0; i < kNumStages; ++i) {
    widths[i] = config_.encoder.stages[i].channels;
    fusion[i] = FusionBlock<T>(root.child("fusion." + std::to_string(i + 1)), widths[i],
                               config_.num_modalities, fusion_config_);
  }
  decoder = MlpDecoder<T>(root.child("decoder"), widths, config_.decoder);
}

template <typename T>
void MmsFormer<T>::check_inputs(const std::vector<BasicTensor<T>>& images) const {
  if (static_cast<Index>(images.size()) != config_.num_modalities) {
    throw ArityError("forward: model expects " + std::to_string(config_.num_modalities) + " modalities, got " +
                     std::to_string(images.size()));
  }
  for (std::size_t m = 1; m < images.size(); ++m) {
    if (images[m].shape() != images[0].shape()) {
      throw ShapeError("forward: modality " + std::to_string(m) + " has shape " + to_string(images[m].shape()) +
                       ", modality 0 has " + to_string(images[0].shape()));
    }
  }
  encoders.front().check_input(images.front());
}

template <typename T>
std::vector<FeaturePyramid<T>> MmsFormer<T>::encode(const std::vector<BasicTensor<T>>& images) const {
  check_inputs(images);
  std::vector<FeaturePyramid<T>> out;
  out.reserve(images.size());
  for (std::size_t m = 0; m < images.size(); ++m) out.push_back(encoders[m].encode(images[m]));
  return out;
}

template <typename T>
FeaturePyramid<T> MmsFormer<T>::fuse(const std::vector<FeaturePyramid<T>>& per_modality) const {
  FeaturePyramid<T> fused;
  for (std::size_t i = 0; i < kNumStages; ++i) {
    std::vector<BasicTensor<T>> level;
    level.reserve(per_modality.size());
    for (const auto& pyramid : per_modality) level.push_back(pyramid[i]);
    fused[i] = fusion[i](level);
  }
  return fused;
}

template <typename T>
BasicTensor<T> MmsFormer<T>::forward_quarter(const std::vector<BasicTensor<T>>& images) const {
  return decoder(fuse(encode(images)));
}

template <typename T>
BasicTensor<T> MmsFormer<T>::forward(const std::vector<BasicTensor<T>>& images) const {
  const auto logits = forward_quarter(images);
  return ops::bilinear_upsample(logits, images.front().dim(1), images.front().dim(2));
}

template <typename T>
std::string MmsFormer<T>::summary() const {
  std::ostringstream os;
  os << "MMSFormer: " << config_.num_modalities << " modalities, variant " << to_string(config_.variant) << "\n";
  for (std::size_t i = 0; i < kNumStages; ++i) {
    const auto& s = config_.encoder.stages[i];
    os << "  stage" << i + 1 << ": channels " << s.channels << ", depth " << s.depth << ", heads " << s.heads
       << ", reduction " << s.reduction_ratio << ", stride " << config_.encoder.stage_stride(i) << "\n";
  }
  os << "  fusion: ";
  if (fusion_config_.linear_only) {
    os << "linear only";
  } else {
    os << "kernels [";
    if (fusion_config_.enable_parallel_convs) {
      for (std::size_t k = 0; k < fusion_config_.kernel_sizes.size(); ++k) {
        os << (k ? "," : "") << fusion_config_.kernel_sizes[k];
      }
    }
    os << "] " << to_string(fusion_config_.conv_grouping) << ", channel attention "
       << (fusion_config_.enable_channel_attention ? "on" : "off") << " (r=" << fusion_config_.se_reduction << ")";
  }
  os << "\n  decoder: embed " << config_.decoder.embed_dim << ", classes " << config_.decoder.num_classes << "\n";
  os << "  parameters: " << params_.total_elements() << "\n";
  return os.str();
}

template <typename Dst, typename Src>
void copy_parameters(const ParameterSet<Src>& src, ParameterSet<Dst>& dst) {
  for (const auto& p : dst.items()) {
    const auto* from = src.find(p.name);
    if (!from) throw ConfigError("copy_parameters: source lacks parameter " + p.name);
    if (from->shape() != p.tensor.shape()) {
      throw ShapeError("copy_parameters: " + p.name + " has shape " + to_string(from->shape()) + " vs " +
                       to_string(p.tensor.shape()));
    }
    auto out = BasicTensor<Dst>(p.tensor).mutable_data();
    const auto in = from->data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Dst>(in[i]);
  }
}

template class MmsFormer<float>;
template class MmsFormer<double>;
template void copy_parameters(const ParameterSet<float>&, ParameterSet<float>&);
template void copy_parameters(const ParameterSet<float>&, ParameterSet<double>&);
template void copy_parameters(const ParameterSet<double>&, ParameterSet<double>&);
template void copy_parameters(const ParameterSet<double>&, ParameterSet<float>&);

}  // namespace mms
