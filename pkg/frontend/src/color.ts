// Diverging probability color scale with a fixed midpoint at the 0.5
// decision threshold: p=0 deep red, p=0.5 neutral, p=1 deep blue.
// Palette endpoints follow the classic RdBu diverging scheme:
//   0.0 -> rgb(178, 24, 43), 0.5 -> rgb(247, 247, 247), 1.0 -> rgb(33, 102, 172)

export const LOW_COLOR: [number, number, number] = [178, 24, 43];
export const MID_COLOR: [number, number, number] = [247, 247, 247];
export const HIGH_COLOR: [number, number, number] = [33, 102, 172];

function lerp(a: [number, number, number], b: [number, number, number], t: number): [number, number, number] {
  return [
    Math.round(a[0] + (b[0] - a[0]) * t),
    Math.round(a[1] + (b[1] - a[1]) * t),
    Math.round(a[2] + (b[2] - a[2]) * t),
  ];
}

export function probabilityColor(p: number): string {
  if (!Number.isFinite(p)) {
    throw new Error(`probability must be finite, got ${p}`);
  }
  const clamped = Math.min(1, Math.max(0, p));
  const [r, g, b] =
    clamped <= 0.5
      ? lerp(LOW_COLOR, MID_COLOR, clamped / 0.5)
      : lerp(MID_COLOR, HIGH_COLOR, (clamped - 0.5) / 0.5);
  return `rgb(${r}, ${g}, ${b})`;
}

// Readable text color for a given cell probability.
export function textColorFor(p: number): string {
  return p < 0.2 || p > 0.85 ? "#ffffff" : "#1c1c1c";
}
