#pragma once

#define BREGCAL_VERSION "0.1.0"
