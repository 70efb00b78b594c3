#pragma once

#include "measfid/error.hpp"
#include "measfid/core.hpp"
#include "measfid/haar.hpp"
#include "measfid/device.hpp"
#include "measfid/metrics.hpp"
#include "measfid/protocols.hpp"
#include "measfid/tomography.hpp"
#include "measfid/qubit.hpp"
