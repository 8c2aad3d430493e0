#pragma once

#include "mvseg/block_motion.hpp"
#include "mvseg/error.hpp"
#include "mvseg/eval.hpp"
#include "mvseg/extractor.hpp"
#include "mvseg/feature.hpp"
#include "mvseg/frame.hpp"
#include "mvseg/frame_io.hpp"
#include "mvseg/fusion.hpp"
#include "mvseg/pipeline.hpp"
#include "mvseg/synth.hpp"
#include "mvseg/task_head.hpp"
#include "mvseg/warp.hpp"
