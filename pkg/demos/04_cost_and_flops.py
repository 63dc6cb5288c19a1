#!/usr/bin/env python3
"""Account for parameters and inference cost at desk and full scale.

The headline property of the shared-basis design: registering another style
costs exactly basis_channels parameters (a single weight vector), while the
convolutional machinery is shared.  The FLOPs table is the analytic
multiply-add count of one stylizing pass; conventions differ across papers,
so the number is reported rather than compared.
"""

from stylemix.model import ModelConfig, MultiStyleModel
from stylemix.remix import flops_count

for label, config in (("desk", ModelConfig.desk()), ("full-scale", ModelConfig.paper_scale())):
    model = MultiStyleModel(config, seed=0)
    base = model.num_parameters()
    model.add_style("probe")
    per_style = model.num_parameters() - base
    print(f"{label}: image {config.image_size}, basis channels {config.basis_channels}")
    print(f"  shared parameters (autoencoder + basis): {base:,}")
    print(f"  cost per additional style:               {per_style:,}")
    for n in (1, 10, 50):
        print(f"  total with {n:>2} styles: {base + n * per_style:,}")

    report = flops_count(config, config.image_size)
    print(f"  stylizing pass at {config.image_size}x{config.image_size}:")
    for layer in report.layers:
        print(f"    {layer['name']:>6}: {layer['c_in']:>3} -> {layer['c_out']:<3} "
              f"@ {layer['out_h']}x{layer['out_w']:<4} {layer['macs']:>15,} MACs")
    print(f"    total {report.total_macs:,} MACs = {report.total_flops:,} FLOPs (2 per MAC)")
    print()
