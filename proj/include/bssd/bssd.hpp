#pragma once

#include "bssd/common.hpp"
#include "bssd/container.hpp"
#include "bssd/diarization.hpp"
#include "bssd/doa_grid.hpp"
#include "bssd/fft.hpp"
#include "bssd/geometry.hpp"
#include "bssd/gradcheck.hpp"
#include "bssd/localization.hpp"
#include "bssd/metrics.hpp"
#include "bssd/pipeline.hpp"
#include "bssd/rir.hpp"
#include "bssd/rir_sim.hpp"
#include "bssd/rng.hpp"
#include "bssd/separation_fd.hpp"
#include "bssd/separation_td.hpp"
#include "bssd/signal.hpp"
#include "bssd/spatial_map.hpp"
#include "bssd/stft.hpp"
#include "bssd/wav.hpp"
#include "bssd/whitening.hpp"
