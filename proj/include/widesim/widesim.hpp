#pragma once

#include "widesim/compute.hpp"
#include "widesim/des.hpp"
#include "widesim/error.hpp"
#include "widesim/io.hpp"
#include "widesim/network.hpp"
#include "widesim/orchestration.hpp"
#include "widesim/policy.hpp"
#include "widesim/report.hpp"
#include "widesim/trace.hpp"
#include "widesim/workflow.hpp"
