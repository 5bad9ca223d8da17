#pragma once

#include "analysis.hpp"
#include "error.hpp"
#include "filtration.hpp"
#include "ingest.hpp"
#include "persistence.hpp"
#include "project.hpp"
#include "vectorize.hpp"
