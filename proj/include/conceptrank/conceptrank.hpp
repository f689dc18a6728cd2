#pragma once

#include "conceptrank/core.hpp"
#include "conceptrank/eval.hpp"
#include "conceptrank/hierse.hpp"
#include "conceptrank/io.hpp"
#include "conceptrank/neivote.hpp"
#include "conceptrank/rerank.hpp"
