#pragma once

#include "npsnet/app/commands.hpp"
#include "npsnet/app/dataset.hpp"
#include "npsnet/app/evaluate.hpp"
#include "npsnet/app/train.hpp"
#include "npsnet/core/adam.hpp"
#include "npsnet/core/checkpoint.hpp"
#include "npsnet/core/errors.hpp"
#include "npsnet/core/macs.hpp"
#include "npsnet/core/ops.hpp"
#include "npsnet/core/params.hpp"
#include "npsnet/core/random.hpp"
#include "npsnet/core/tensor.hpp"
#include "npsnet/eval/metrics.hpp"
#include "npsnet/io/image.hpp"
#include "npsnet/io/map_io.hpp"
#include "npsnet/io/wav.hpp"
#include "npsnet/model/config.hpp"
#include "npsnet/model/encoders.hpp"
#include "npsnet/model/fusion.hpp"
#include "npsnet/model/head.hpp"
#include "npsnet/model/npsnet.hpp"
#include "npsnet/model/ufm.hpp"
#include "npsnet/pipeline/fixture.hpp"
#include "npsnet/pipeline/gaze.hpp"
#include "npsnet/pipeline/manifest.hpp"
#include "npsnet/pipeline/render.hpp"
#include "npsnet/types.hpp"
