"""From frame-level annotations to a training corpus.

Frame annotations are (frame, verb, target) records.  The class map sends
each (verb, target) pair to one of six classes (several raw pairs merge
into dissect/fat); runs of equal classes collapse into segments and the
segment sentence is wrapped in SIL.

Run:  python3 demos/05_annotations_to_corpus.py
"""

import json
import tempfile
from pathlib import Path

import actgram as ag
from actgram.corpus import FrameAnnotation

cmap = ag.default_class_map()
print("classes:")
for c in cmap.classes:
    print(f"  {c.token}: <{c.verb}, {c.target}>")

frames = [
    FrameAnnotation(0, "dissect", "fat"),
    FrameAnnotation(1, "dissect", "omentum"),      # merges into dissect/fat
    FrameAnnotation(2, "dissect", "cystic_duct"),
    FrameAnnotation(3, "dissect", "cystic_duct"),
    FrameAnnotation(4, "dissect", "gallbladder"),
    FrameAnnotation(5, "aspirate", "fluid"),
    FrameAnnotation(6, "dissect", "gallbladder"),
]
sentence = ag.frames_to_sentence(frames, cmap)
print("\nsentence:", " ".join(sentence))

# The same pipeline, via files: a JSON annotation export in, a corpus
# text file out.
with tempfile.TemporaryDirectory() as tmp:
    ann = Path(tmp) / "video01.json"
    ann.write_text(json.dumps(
        [{"frame": f.frame_index, "verb": f.verb, "target": f.target} for f in frames]
    ))
    loaded = ag.load_frame_annotations(ann)
    corpus_path = Path(tmp) / "corpus.txt"
    ag.save_corpus([ag.frames_to_sentence(loaded, cmap)], corpus_path)
    print("\ncorpus file contents:")
    print(corpus_path.read_text(), end="")
