#pragma once

#include "aries/error.hpp"
#include "aries/graph.hpp"
#include "aries/task.hpp"
#include "aries/backend.hpp"
#include "aries/http_backend.hpp"
#include "aries/transforms.hpp"
#include "aries/schedule.hpp"
#include "aries/prompts.hpp"
#include "aries/mdp.hpp"
#include "aries/search.hpp"
#include "aries/metrics.hpp"
