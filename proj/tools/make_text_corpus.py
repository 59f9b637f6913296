"""Builds tests/data/english.txt from documentation shipped with Python."""
import importlib
import inspect
import pkgutil
import sys
import warnings

LIMIT = 1_300_000

def docstrings():
    warnings.simplefilter("ignore")
    names = sorted(m.name for m in pkgutil.iter_modules() if not m.name.startswith("_"))
    for name in names:
        if name in {"antigravity", "this", "idlelib", "tkinter", "turtle", "turtledemo"}:
            continue
        try:
            mod = importlib.import_module(name)
        except BaseException:
            continue
        if not getattr(mod, "__file__", "") or "site-packages" in (mod.__file__ or ""):
            continue
        doc = inspect.getdoc(mod)
        if doc:
            yield doc
        for _, obj in sorted(vars(mod).items()):
            if getattr(obj, "__module__", None) == name and (inspect.isclass(obj) or inspect.isfunction(obj)):
                d = inspect.getdoc(obj)
                if d and len(d) > 200:
                    yield d

def main(out):
    import pydoc_data.topics as topics
    parts = [topics.topics[k] for k in sorted(topics.topics)]
    size = sum(len(p.encode()) for p in parts)
    for d in docstrings():
        if size >= LIMIT:
            break
        parts.append(d)
        size += len(d.encode()) + 2
    text = "\n\n".join(parts)
    text = text.encode("ascii", "replace")[:LIMIT]
    with open(out, "wb") as f:
        f.write(text)

if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/english.txt")
