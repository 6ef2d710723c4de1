// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header.
#pragma once

#include "voxdet/anchors.hpp"
#include "voxdet/augment.hpp"
#include "voxdet/box.hpp"
#include "voxdet/checkpoint.hpp"
#include "voxdet/common.hpp"
#include "voxdet/dataset.hpp"
#include "voxdet/decode.hpp"
#include "voxdet/eval.hpp"
#include "voxdet/gradcheck.hpp"
#include "voxdet/hyp.hpp"
#include "voxdet/labels.hpp"
#include "voxdet/loss.hpp"
#include "voxdet/model.hpp"
#include "voxdet/model_config.hpp"
#include "voxdet/nifti.hpp"
#include "voxdet/parallel.hpp"
#include "voxdet/phantom.hpp"
#include "voxdet/preprocess.hpp"
#include "voxdet/train.hpp"
