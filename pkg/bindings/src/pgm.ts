/** Minimal binary PGM (P5) reader/writer for [0, 1] float rasters. */

export function writePgm(values: number[][]): Buffer {
  const height = values.length;
  const width = values[0].length;
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, "ascii");
  const data = Buffer.alloc(width * height);
  let k = 0;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      data[k++] = Math.round(values[y][x] * 255);
    }
  }
  return Buffer.concat([header, data]);
}

export function readPgm(buf: Buffer): number[][] {
  // header: magic, width, height, maxval, single whitespace, raster
  let pos = 0;
  const token = (): string => {
    while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++;
    const start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    return buf.subarray(start, pos).toString("ascii");
  };
  const magic = token();
  if (magic !== "P5") throw new Error(`not a binary PGM (magic ${magic})`);
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}`);
  pos++; // single whitespace byte after maxval
  const out: number[][] = [];
  for (let y = 0; y < height; y++) {
    const row: number[] = new Array(width);
    for (let x = 0; x < width; x++) row[x] = buf[pos++] / 255;
    out.push(row);
  }
  return out;
}
