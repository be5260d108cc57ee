#pragma once

// Everything in one include.

#include "equisr/autodiff.hpp"
#include "equisr/checkpoint.hpp"
#include "equisr/config.hpp"
#include "equisr/data_io.hpp"
#include "equisr/encoder.hpp"
#include "equisr/equivariance.hpp"
#include "equisr/errors.hpp"
#include "equisr/filter.hpp"
#include "equisr/gradcheck.hpp"
#include "equisr/gradsuite.hpp"
#include "equisr/group.hpp"
#include "equisr/inr.hpp"
#include "equisr/metrics.hpp"
#include "equisr/params.hpp"
#include "equisr/train.hpp"
#include "equisr/version.hpp"
