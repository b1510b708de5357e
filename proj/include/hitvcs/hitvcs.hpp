#pragma once

#include "hitvcs/autograd.hpp"
#include "hitvcs/checkpoint.hpp"
#include "hitvcs/conv.hpp"
#include "hitvcs/data.hpp"
#include "hitvcs/deep_recon.hpp"
#include "hitvcs/errors.hpp"
#include "hitvcs/frame.hpp"
#include "hitvcs/image_io.hpp"
#include "hitvcs/initial_recon.hpp"
#include "hitvcs/loss.hpp"
#include "hitvcs/metrics.hpp"
#include "hitvcs/ops.hpp"
#include "hitvcs/sampling.hpp"
#include "hitvcs/tensor.hpp"
#include "hitvcs/train.hpp"
#include "hitvcs/config.hpp"
