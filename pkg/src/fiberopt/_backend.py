"""Select the compiled scan kernels, falling back to pure numpy."""

try:
    from fiberopt import _kernels as kernels

    HAVE_COMPILED_KERNELS = True
except ImportError:  # extension not built
    from fiberopt import _kernels_py as kernels

    HAVE_COMPILED_KERNELS = False

innovation_scan = kernels.innovation_scan
ema_scan = kernels.ema_scan
