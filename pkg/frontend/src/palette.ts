/**
 * Region-id color code, mirroring the pipeline's palette: index 0 is
 * always pink, and rendered boxes use color index (region id mod palette
 * size), so bracket mentions colored the same way always match the box.
 */

export interface PaletteEntry {
  readonly name: string;
  readonly rgb: readonly [number, number, number];
}

export const PALETTE: readonly PaletteEntry[] = [
  { name: 'pink', rgb: [255, 105, 180] },
  { name: 'cyan', rgb: [0, 255, 255] },
  { name: 'yellow', rgb: [255, 255, 0] },
  { name: 'green', rgb: [0, 255, 0] },
  { name: 'orange', rgb: [255, 165, 0] },
  { name: 'purple', rgb: [128, 0, 128] },
  { name: 'blue', rgb: [0, 0, 255] },
  { name: 'red', rgb: [255, 0, 0] },
];

export function colorForId(regionId: number): PaletteEntry {
  if (regionId < 0 || !Number.isInteger(regionId)) {
    throw new Error(`region id must be a non-negative integer, got ${regionId}`);
  }
  return PALETTE[regionId % PALETTE.length];
}

export function cssColor(entry: PaletteEntry): string {
  const [r, g, b] = entry.rgb;
  return `rgb(${r}, ${g}, ${b})`;
}

export interface TextSegment {
  text: string;
  /** region id when the segment is a bracket token like "[3]", else null */
  regionId: number | null;
}

const BRACKET_RE = /\[(\d+)\]/g;

/** Split text into plain and bracket-token segments for colored rendering. */
export function segmentBrackets(text: string): TextSegment[] {
  const segments: TextSegment[] = [];
  let last = 0;
  for (const match of text.matchAll(BRACKET_RE)) {
    const start = match.index ?? 0;
    if (start > last) {
      segments.push({ text: text.slice(last, start), regionId: null });
    }
    segments.push({ text: match[0], regionId: parseInt(match[1], 10) });
    last = start + match[0].length;
  }
  if (last < text.length) {
    segments.push({ text: text.slice(last), regionId: null });
  }
  return segments;
}
