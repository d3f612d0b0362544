"""
Binary model files: magic bytes, one JSON header line, then raw little-endian arrays.
"""
import json
import os

import numpy as np

from errors import ModelFileError

MAGIC = b"HMTT1\n"

# Only fixed-width little-endian dtypes are written.
DTYPES = {'f8': '<f8', 'u8': '<u8', 'i8': '<i8'}


def write_blob(path, kind, header, arrays):
    """Write `arrays` (name -> ndarray, insertion order kept) after a JSON header."""
    specs = []
    payload = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = 'f8' if arr.dtype.kind == 'f' else ('u8' if arr.dtype.kind == 'u' else 'i8')
        data = np.ascontiguousarray(arr, dtype=DTYPES[code])
        specs.append({'name': name, 'dtype': code, 'shape': list(data.shape)})
        payload.append(data.tobytes())

    full_header = dict(header)
    full_header['kind'] = kind
    full_header['arrays'] = specs

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'wb') as f:
        f.write(MAGIC)
        f.write(json.dumps(full_header, sort_keys=True).encode('utf-8') + b"\n")
        for chunk in payload:
            f.write(chunk)


def read_blob(path, kind=None):
    """Return (header, arrays) from a file written by `write_blob`."""
    if not os.path.exists(path):
        raise ModelFileError(path)
    with open(path, 'rb') as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ModelFileError(path, "not a model file")
        header = json.loads(f.readline().decode('utf-8'))
        if kind is not None and header.get('kind') != kind:
            raise ModelFileError(path, f"expected a '{kind}' file, found '{header.get('kind')}'")
        arrays = {}
        for spec in header['arrays']:
            dtype = np.dtype(DTYPES[spec['dtype']])
            count = int(np.prod(spec['shape'], dtype=np.int64))
            buf = f.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise ModelFileError(path, f"truncated array '{spec['name']}'")
            arrays[spec['name']] = np.frombuffer(buf, dtype=dtype).reshape(spec['shape']).copy()
    return header, arrays
