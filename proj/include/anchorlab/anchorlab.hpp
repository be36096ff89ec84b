#pragma once

#include "anchorlab/anchor_layout.hpp"
#include "anchorlab/config.hpp"
#include "anchorlab/dataset.hpp"
#include "anchorlab/emo.hpp"
#include "anchorlab/geometry.hpp"
#include "anchorlab/matching.hpp"
#include "anchorlab/optimizer.hpp"
#include "anchorlab/parallel.hpp"
#include "anchorlab/report.hpp"
#include "anchorlab/rng.hpp"
