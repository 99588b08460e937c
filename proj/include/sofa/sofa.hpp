#pragma once

#if __cplusplus < 202002L
#error sofa requires C++20 or newer.
#endif

#include "sofa/error.hpp"
#include "sofa/frame.hpp"
#include "sofa/flow.hpp"
#include "sofa/integral_image.hpp"
#include "sofa/cascade.hpp"
#include "sofa/detect.hpp"
#include "sofa/zones.hpp"
#include "sofa/events.hpp"
#include "sofa/midi.hpp"
#include "sofa/wav.hpp"
#include "sofa/synth.hpp"
#include "sofa/spsc_queue.hpp"
#include "sofa/control.hpp"
#include "sofa/config.hpp"
#include "sofa/pipeline.hpp"
#include "sofa/session.hpp"
#include "sofa/bench.hpp"
