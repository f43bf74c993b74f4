#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cxr/core/random.hpp"
#include "cxr/models/config.hpp"
#include "cxr/nn/layers.hpp"

// Feature extractors. Parameter names mirror the torchvision (ResNet,
// Inception-v3) and timm (Inception-ResNet-v2) module hierarchies, and
// exported state dicts load by name.

namespace cxr::models {

namespace detail {

using nn::Window;

template <typename T>
using Seq = nn::Sequential<T>;

template <typename T>
std::unique_ptr<Seq<T>> seq() {
  return std::make_unique<Seq<T>>();
}

/// conv (no bias) -> batch norm -> ReLU, named "<>.conv" / "<>.bn".
template <typename T>
nn::LayerPtr<T> conv_bn_relu(int in, int out, Window w, Rng& rng, double eps = 1e-3) {
  auto s = seq<T>();
  s->template emplace<nn::Conv2d<T>>("conv", in, out, w, false, rng);
  s->template emplace<nn::BatchNorm2d<T>>("bn", out, eps);
  s->template emplace<nn::ReLU<T>>("");
  return s;
}

inline Window kxk(int k, int stride = 1, int pad = 0) { return Window::square(k, stride, pad); }
inline Window rect(int kh, int kw, int ph, int pw) { return {kh, kw, 1, 1, ph, pw}; }

// ---------------------------------------------------------------- ResNet

template <typename T>
nn::LayerPtr<T> bottleneck(int inplanes, int planes, int stride, Rng& rng) {
  constexpr int kExpansion = 4;
  auto main = seq<T>();
  main->template emplace<nn::Conv2d<T>>("conv1", inplanes, planes, kxk(1), false, rng);
  main->template emplace<nn::BatchNorm2d<T>>("bn1", planes);
  main->template emplace<nn::ReLU<T>>("");
  main->template emplace<nn::Conv2d<T>>("conv2", planes, planes, kxk(3, stride, 1), false, rng);
  main->template emplace<nn::BatchNorm2d<T>>("bn2", planes);
  main->template emplace<nn::ReLU<T>>("");
  main->template emplace<nn::Conv2d<T>>("conv3", planes, planes * kExpansion, kxk(1), false, rng);
  main->template emplace<nn::BatchNorm2d<T>>("bn3", planes * kExpansion);

  nn::LayerPtr<T> shortcut;
  if (stride != 1 || inplanes != planes * kExpansion) {
    auto ds = seq<T>();
    ds->template emplace<nn::Conv2d<T>>("0", inplanes, planes * kExpansion, kxk(1, stride), false, rng);
    ds->template emplace<nn::BatchNorm2d<T>>("1", planes * kExpansion);
    shortcut = std::move(ds);
  }
  return std::make_unique<nn::Residual<T>>(std::move(main), "downsample", std::move(shortcut), 1.0, true);
}

template <typename T>
std::unique_ptr<Seq<T>> resnet(const std::vector<int>& blocks, Rng& rng) {
  auto net = seq<T>();
  net->template emplace<nn::Conv2d<T>>("conv1", 3, 64, kxk(7, 2, 3), false, rng);
  net->template emplace<nn::BatchNorm2d<T>>("bn1", 64);
  net->template emplace<nn::ReLU<T>>("relu");
  net->template emplace<nn::MaxPool2d<T>>("maxpool", kxk(3, 2, 1));
  int inplanes = 64;
  const int widths[4] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    auto layer = seq<T>();
    for (int b = 0; b < blocks[static_cast<std::size_t>(stage)]; ++b) {
      const int stride = (b == 0 && stage > 0) ? 2 : 1;
      layer->add(std::to_string(b), bottleneck<T>(inplanes, widths[stage], stride, rng));
      inplanes = widths[stage] * 4;
    }
    net->add("layer" + std::to_string(stage + 1), std::move(layer));
  }
  return net;
}

// ---------------------------------------------------------- Inception-v3

template <typename T>
void add_parts(Seq<T>&) {}

template <typename T, typename... Rest>
void add_parts(Seq<T>& s, std::string name, nn::LayerPtr<T> layer, Rest&&... rest) {
  s.add(std::move(name), std::move(layer));
  add_parts<T>(s, std::forward<Rest>(rest)...);
}

/// Sequential from alternating (name, layer) arguments.
template <typename T, typename... Parts>
nn::LayerPtr<T> chain(Parts&&... parts) {
  auto s = seq<T>();
  add_parts<T>(*s, std::forward<Parts>(parts)...);
  return s;
}

template <typename T>
nn::LayerPtr<T> avg_then(nn::LayerPtr<T> conv, std::string name, bool count_pad) {
  auto s = seq<T>();
  s->template emplace<nn::AvgPool2d<T>>("", kxk(3, 1, 1), count_pad);
  s->add(std::move(name), std::move(conv));
  return s;
}

template <typename T>
nn::LayerPtr<T> inception_a(int in, int pool_features, Rng& rng) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch1x1", conv_bn_relu<T>(in, 64, kxk(1), rng));
  c->add("", chain<T>("branch5x5_1", conv_bn_relu<T>(in, 48, kxk(1), rng),
                       "branch5x5_2", conv_bn_relu<T>(48, 64, kxk(5, 1, 2), rng)));
  c->add("", chain<T>("branch3x3dbl_1", conv_bn_relu<T>(in, 64, kxk(1), rng),
                       "branch3x3dbl_2", conv_bn_relu<T>(64, 96, kxk(3, 1, 1), rng),
                       "branch3x3dbl_3", conv_bn_relu<T>(96, 96, kxk(3, 1, 1), rng)));
  c->add("", avg_then<T>(conv_bn_relu<T>(in, pool_features, kxk(1), rng), "branch_pool", true));
  return c;
}

template <typename T>
nn::LayerPtr<T> inception_b(int in, Rng& rng) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch3x3", conv_bn_relu<T>(in, 384, kxk(3, 2), rng));
  c->add("", chain<T>("branch3x3dbl_1", conv_bn_relu<T>(in, 64, kxk(1), rng),
                       "branch3x3dbl_2", conv_bn_relu<T>(64, 96, kxk(3, 1, 1), rng),
                       "branch3x3dbl_3", conv_bn_relu<T>(96, 96, kxk(3, 2), rng)));
  c->add("", std::make_unique<nn::MaxPool2d<T>>(kxk(3, 2)));
  return c;
}

template <typename T>
nn::LayerPtr<T> inception_c(int in, int c7, Rng& rng) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch1x1", conv_bn_relu<T>(in, 192, kxk(1), rng));
  c->add("", chain<T>("branch7x7_1", conv_bn_relu<T>(in, c7, kxk(1), rng),
                       "branch7x7_2", conv_bn_relu<T>(c7, c7, rect(1, 7, 0, 3), rng),
                       "branch7x7_3", conv_bn_relu<T>(c7, 192, rect(7, 1, 3, 0), rng)));
  c->add("", chain<T>("branch7x7dbl_1", conv_bn_relu<T>(in, c7, kxk(1), rng),
                       "branch7x7dbl_2", conv_bn_relu<T>(c7, c7, rect(7, 1, 3, 0), rng),
                       "branch7x7dbl_3", conv_bn_relu<T>(c7, c7, rect(1, 7, 0, 3), rng),
                       "branch7x7dbl_4", conv_bn_relu<T>(c7, c7, rect(7, 1, 3, 0), rng),
                       "branch7x7dbl_5", conv_bn_relu<T>(c7, 192, rect(1, 7, 0, 3), rng)));
  c->add("", avg_then<T>(conv_bn_relu<T>(in, 192, kxk(1), rng), "branch_pool", true));
  return c;
}

template <typename T>
nn::LayerPtr<T> inception_d(int in, Rng& rng) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("", chain<T>("branch3x3_1", conv_bn_relu<T>(in, 192, kxk(1), rng),
                       "branch3x3_2", conv_bn_relu<T>(192, 320, kxk(3, 2), rng)));
  c->add("", chain<T>("branch7x7x3_1", conv_bn_relu<T>(in, 192, kxk(1), rng),
                       "branch7x7x3_2", conv_bn_relu<T>(192, 192, rect(1, 7, 0, 3), rng),
                       "branch7x7x3_3", conv_bn_relu<T>(192, 192, rect(7, 1, 3, 0), rng),
                       "branch7x7x3_4", conv_bn_relu<T>(192, 192, kxk(3, 2), rng)));
  c->add("", std::make_unique<nn::MaxPool2d<T>>(kxk(3, 2)));
  return c;
}

template <typename T>
nn::LayerPtr<T> inception_e(int in, Rng& rng) {
  auto split3 = std::make_unique<nn::Concat<T>>();
  split3->add("branch3x3_2a", conv_bn_relu<T>(384, 384, rect(1, 3, 0, 1), rng));
  split3->add("branch3x3_2b", conv_bn_relu<T>(384, 384, rect(3, 1, 1, 0), rng));
  auto split3dbl = std::make_unique<nn::Concat<T>>();
  split3dbl->add("branch3x3dbl_3a", conv_bn_relu<T>(384, 384, rect(1, 3, 0, 1), rng));
  split3dbl->add("branch3x3dbl_3b", conv_bn_relu<T>(384, 384, rect(3, 1, 1, 0), rng));

  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch1x1", conv_bn_relu<T>(in, 320, kxk(1), rng));
  c->add("", chain<T>("branch3x3_1", conv_bn_relu<T>(in, 384, kxk(1), rng),
                       "", std::move(split3)));
  c->add("", chain<T>("branch3x3dbl_1", conv_bn_relu<T>(in, 448, kxk(1), rng),
                       "branch3x3dbl_2", conv_bn_relu<T>(448, 384, kxk(3, 1, 1), rng),
                       "", std::move(split3dbl)));
  c->add("", avg_then<T>(conv_bn_relu<T>(in, 192, kxk(1), rng), "branch_pool", true));
  return c;
}

template <typename T>
std::unique_ptr<Seq<T>> inception_v3(Rng& rng) {
  auto net = seq<T>();
  net->add("Conv2d_1a_3x3", conv_bn_relu<T>(3, 32, kxk(3, 2), rng));
  net->add("Conv2d_2a_3x3", conv_bn_relu<T>(32, 32, kxk(3), rng));
  net->add("Conv2d_2b_3x3", conv_bn_relu<T>(32, 64, kxk(3, 1, 1), rng));
  net->template emplace<nn::MaxPool2d<T>>("maxpool1", kxk(3, 2));
  net->add("Conv2d_3b_1x1", conv_bn_relu<T>(64, 80, kxk(1), rng));
  net->add("Conv2d_4a_3x3", conv_bn_relu<T>(80, 192, kxk(3), rng));
  net->template emplace<nn::MaxPool2d<T>>("maxpool2", kxk(3, 2));
  net->add("Mixed_5b", inception_a<T>(192, 32, rng));
  net->add("Mixed_5c", inception_a<T>(256, 64, rng));
  net->add("Mixed_5d", inception_a<T>(288, 64, rng));
  net->add("Mixed_6a", inception_b<T>(288, rng));
  net->add("Mixed_6b", inception_c<T>(768, 128, rng));
  net->add("Mixed_6c", inception_c<T>(768, 160, rng));
  net->add("Mixed_6d", inception_c<T>(768, 160, rng));
  net->add("Mixed_6e", inception_c<T>(768, 192, rng));
  net->add("Mixed_7a", inception_d<T>(768, rng));
  net->add("Mixed_7b", inception_e<T>(1280, rng));
  net->add("Mixed_7c", inception_e<T>(2048, rng));
  return net;
}

// --------------------------------------------------- Inception-ResNet-v2

template <typename T>
nn::LayerPtr<T> scaled_residual(std::unique_ptr<nn::Concat<T>> branches, int concat_width, int out,
                                double scale, bool relu, Rng& rng) {
  auto main = seq<T>();
  main->add("", std::move(branches));
  main->template emplace<nn::Conv2d<T>>("conv2d", concat_width, out, kxk(1), true, rng);
  return std::make_unique<nn::Residual<T>>(std::move(main), "", nullptr, scale, relu);
}

template <typename T>
nn::LayerPtr<T> block35(Rng& rng) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch0", conv_bn_relu<T>(320, 32, kxk(1), rng));
  c->add("branch1", chain<T>("0", conv_bn_relu<T>(320, 32, kxk(1), rng),
                              "1", conv_bn_relu<T>(32, 32, kxk(3, 1, 1), rng)));
  c->add("branch2", chain<T>("0", conv_bn_relu<T>(320, 32, kxk(1), rng),
                              "1", conv_bn_relu<T>(32, 48, kxk(3, 1, 1), rng),
                              "2", conv_bn_relu<T>(48, 64, kxk(3, 1, 1), rng)));
  return scaled_residual<T>(std::move(c), 128, 320, 0.17, true, rng);
}

template <typename T>
nn::LayerPtr<T> block17(Rng& rng) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch0", conv_bn_relu<T>(1088, 192, kxk(1), rng));
  c->add("branch1", chain<T>("0", conv_bn_relu<T>(1088, 128, kxk(1), rng),
                              "1", conv_bn_relu<T>(128, 160, rect(1, 7, 0, 3), rng),
                              "2", conv_bn_relu<T>(160, 192, rect(7, 1, 3, 0), rng)));
  return scaled_residual<T>(std::move(c), 384, 1088, 0.10, true, rng);
}

template <typename T>
nn::LayerPtr<T> block8(double scale, bool relu, Rng& rng) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch0", conv_bn_relu<T>(2080, 192, kxk(1), rng));
  c->add("branch1", chain<T>("0", conv_bn_relu<T>(2080, 192, kxk(1), rng),
                              "1", conv_bn_relu<T>(192, 224, rect(1, 3, 0, 1), rng),
                              "2", conv_bn_relu<T>(224, 256, rect(3, 1, 1, 0), rng)));
  return scaled_residual<T>(std::move(c), 448, 2080, scale, relu, rng);
}

template <typename T>
std::unique_ptr<Seq<T>> inception_resnet_v2(Rng& rng) {
  auto net = seq<T>();
  net->add("conv2d_1a", conv_bn_relu<T>(3, 32, kxk(3, 2), rng));
  net->add("conv2d_2a", conv_bn_relu<T>(32, 32, kxk(3), rng));
  net->add("conv2d_2b", conv_bn_relu<T>(32, 64, kxk(3, 1, 1), rng));
  net->template emplace<nn::MaxPool2d<T>>("maxpool_3a", kxk(3, 2));
  net->add("conv2d_3b", conv_bn_relu<T>(64, 80, kxk(1), rng));
  net->add("conv2d_4a", conv_bn_relu<T>(80, 192, kxk(3), rng));
  net->template emplace<nn::MaxPool2d<T>>("maxpool_5a", kxk(3, 2));

  auto mixed_5b = std::make_unique<nn::Concat<T>>();
  mixed_5b->add("branch0", conv_bn_relu<T>(192, 96, kxk(1), rng));
  mixed_5b->add("branch1", chain<T>("0", conv_bn_relu<T>(192, 48, kxk(1), rng),
                                     "1", conv_bn_relu<T>(48, 64, kxk(5, 1, 2), rng)));
  mixed_5b->add("branch2", chain<T>("0", conv_bn_relu<T>(192, 64, kxk(1), rng),
                                     "1", conv_bn_relu<T>(64, 96, kxk(3, 1, 1), rng),
                                     "2", conv_bn_relu<T>(96, 96, kxk(3, 1, 1), rng)));
  {
    auto b3 = seq<T>();
    b3->template emplace<nn::AvgPool2d<T>>("0", kxk(3, 1, 1), false);
    b3->add("1", conv_bn_relu<T>(192, 64, kxk(1), rng));
    mixed_5b->add("branch3", std::move(b3));
  }
  net->add("mixed_5b", std::move(mixed_5b));

  auto repeat = seq<T>();
  for (int i = 0; i < 10; ++i) repeat->add(std::to_string(i), block35<T>(rng));
  net->add("repeat", std::move(repeat));

  auto mixed_6a = std::make_unique<nn::Concat<T>>();
  mixed_6a->add("branch0", conv_bn_relu<T>(320, 384, kxk(3, 2), rng));
  mixed_6a->add("branch1", chain<T>("0", conv_bn_relu<T>(320, 256, kxk(1), rng),
                                     "1", conv_bn_relu<T>(256, 256, kxk(3, 1, 1), rng),
                                     "2", conv_bn_relu<T>(256, 384, kxk(3, 2), rng)));
  mixed_6a->add("branch2", std::make_unique<nn::MaxPool2d<T>>(kxk(3, 2)));
  net->add("mixed_6a", std::move(mixed_6a));

  auto repeat_1 = seq<T>();
  for (int i = 0; i < 20; ++i) repeat_1->add(std::to_string(i), block17<T>(rng));
  net->add("repeat_1", std::move(repeat_1));

  auto mixed_7a = std::make_unique<nn::Concat<T>>();
  mixed_7a->add("branch0", chain<T>("0", conv_bn_relu<T>(1088, 256, kxk(1), rng),
                                     "1", conv_bn_relu<T>(256, 384, kxk(3, 2), rng)));
  mixed_7a->add("branch1", chain<T>("0", conv_bn_relu<T>(1088, 256, kxk(1), rng),
                                     "1", conv_bn_relu<T>(256, 288, kxk(3, 2), rng)));
  mixed_7a->add("branch2", chain<T>("0", conv_bn_relu<T>(1088, 256, kxk(1), rng),
                                     "1", conv_bn_relu<T>(256, 288, kxk(3, 1, 1), rng),
                                     "2", conv_bn_relu<T>(288, 320, kxk(3, 2), rng)));
  mixed_7a->add("branch3", std::make_unique<nn::MaxPool2d<T>>(kxk(3, 2)));
  net->add("mixed_7a", std::move(mixed_7a));

  auto repeat_2 = seq<T>();
  for (int i = 0; i < 9; ++i) repeat_2->add(std::to_string(i), block8<T>(0.20, true, rng));
  net->add("repeat_2", std::move(repeat_2));
  net->add("block8", block8<T>(1.0, false, rng));
  net->add("conv2d_7b", conv_bn_relu<T>(2080, 1536, kxk(1), rng));
  return net;
}

// ------------------------------------------------------------- tiny CNN

/// conv 3x3 x8 -> ReLU -> max-pool 2 -> conv 3x3 x16 -> ReLU, valid padding.
template <typename T>
std::unique_ptr<Seq<T>> tiny_cnn(Rng& rng) {
  auto net = seq<T>();
  net->template emplace<nn::Conv2d<T>>("conv1", 3, 8, kxk(3), true, rng);
  net->template emplace<nn::ReLU<T>>("");
  net->template emplace<nn::MaxPool2d<T>>("", kxk(2, 2));
  net->template emplace<nn::Conv2d<T>>("conv2", 8, 16, kxk(3), true, rng);
  net->template emplace<nn::ReLU<T>>("");
  return net;
}

}  // namespace detail

template <typename T>
std::unique_ptr<nn::Sequential<T>> make_backbone(Backbone b, Rng& rng) {
  switch (b) {
    case Backbone::resnet50: return detail::resnet<T>({3, 4, 6, 3}, rng);
    case Backbone::resnet101: return detail::resnet<T>({3, 4, 23, 3}, rng);
    case Backbone::resnet152: return detail::resnet<T>({3, 8, 36, 3}, rng);
    case Backbone::inceptionv3: return detail::inception_v3<T>(rng);
    case Backbone::inception_resnetv2: return detail::inception_resnet_v2<T>(rng);
    case Backbone::tiny_cnn: return detail::tiny_cnn<T>(rng);
  }
  throw UsageError("unknown backbone");
}

}  // namespace cxr::models
