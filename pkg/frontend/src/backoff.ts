// Reconnect schedule: exponential backoff with a cap.

export const BASE_DELAY_MS = 500;
export const MAX_DELAY_MS = 15000;

export function reconnectDelay(attempt: number): number {
  if (attempt <= 0) return BASE_DELAY_MS;
  return Math.min(MAX_DELAY_MS, BASE_DELAY_MS * 2 ** attempt);
}
