"""
Assembling the eight training configurations
============================================

The builder turns a cohort into per-slice training sets:

1. LGE only                          5. 1 + synthetic LGE
2. LGE + bSSFP                       6. 2 + synthetic LGE
3. all sequences                     7. 3 + synthetic LGE
4. all + myocardial rotations        8. 4 + synthetic LGE

Record sets nest along both axes (1 in 2 in 3 in 4, and k in k+4). A
stand-in synthesis step (contrast-inverted bSSFP) plays the trainer's role
so configurations 5-8 can be assembled without it.
"""

import tempfile
from pathlib import Path

import numpy as np

from cmrforge.dataset import TrainingConfig, build, format_summary, summarize
from cmrforge.image import SequenceKind, Volume
from cmrforge.manifest import (
    SYNTHETIC_MANIFEST_NAME,
    SyntheticManifest,
    SyntheticRecord,
    read_cohort,
    write_synthetic_manifest,
)
from cmrforge.nifti import read_volume, write_volume
from cmrforge.phantom import generate_cohort, write_cohort_to_dir

BSSFP, LGE, T2 = SequenceKind.BSSFP, SequenceKind.LGE, SequenceKind.T2

work = Path(tempfile.mkdtemp(prefix="cmrforge_demo_"))
print(f"working under {work}")

# %%
# A small cohort: 6 patients, 2 labeled for LGE, 4 for bSSFP/T2.

records = generate_cohort(6, base_seed=11, size=(64, 64),
                          labeled_counts={BSSFP: 4, LGE: 2, T2: 4},
                          slice_ranges={LGE: (4, 4), BSSFP: (3, 3), T2: (2, 2)})
write_cohort_to_dir(records, work / "cohort", base_seed=11)

# %%
# Trainer-shaped synthetic volumes: one per bSSFP-labeled patient, carrying
# that patient's labels downstream.

cohort = read_cohort(work / "cohort" / "cohort.json")
synth_dir = work / "synthetic"
synth_dir.mkdir()
synth_records = []
for p in cohort.patients:
    if not p.labeled(BSSFP):
        continue
    vol, _ = read_volume(work / "cohort" / p.sequences[BSSFP].image, default_sequence=BSSFP)
    fake = Volume(np.float32(1.0) - np.float32(0.8) * vol.data, vol.spacing,
                  SequenceKind.SYNTHETIC_LGE, p.id)
    write_volume(fake, synth_dir / f"{p.id}.nii.gz")
    synth_records.append(SyntheticRecord(f"{p.id}.nii.gz", p.id))
write_synthetic_manifest(SyntheticManifest(11, synth_records), synth_dir / SYNTHETIC_MANIFEST_NAME)
print(f"{len(synth_records)} stand-in synthetic volumes")

# %%
# Build all eight configurations into one dataset root and compare.

manifests = {}
for i in range(1, 9):
    synth = synth_dir if i >= 5 else None
    manifests[i], _ = build(TrainingConfig.from_id(i), work / "cohort" / "cohort.json",
                            work / "dataset", synthetic_dir=synth, seed=11)

print(f"{'config':>6} {'records':>8}  composition")
for i, m in manifests.items():
    parts = ", ".join(f"{seq}/{prov}:{n}" for (seq, prov, _), n in sorted(summarize(m).items()))
    print(f"{i:>6} {len(m.records):>8}  {parts}")

for i in (1, 2, 3):
    assert manifests[i].record_identities() < manifests[i + 1].record_identities()
for i in (1, 2, 3, 4):
    assert manifests[i].record_identities() < manifests[i + 4].record_identities()
print("monotone inclusion holds: 1 < 2 < 3 < 4 and k < k+4")

print()
print(format_summary(manifests[8]))
