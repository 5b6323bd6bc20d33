/* One floating tooltip div shared by every panel. */

let box: HTMLDivElement | null = null;

function ensureBox(): HTMLDivElement {
  if (box === null || !box.isConnected) {
    box = document.createElement('div');
    box.className = 'tooltip';
    box.style.position = 'fixed';
    box.style.display = 'none';
    box.style.pointerEvents = 'none';
    document.body.appendChild(box);
  }
  return box;
}

export function attachTooltip(target: Element, text: () => string): void {
  target.addEventListener('mouseenter', () => {
    const node = ensureBox();
    node.textContent = text();
    node.style.display = 'block';
  });
  target.addEventListener('mousemove', (event) => {
    const node = ensureBox();
    const mouse = event as MouseEvent;
    node.style.left = `${mouse.clientX + 12}px`;
    node.style.top = `${mouse.clientY + 12}px`;
  });
  target.addEventListener('mouseleave', () => {
    ensureBox().style.display = 'none';
  });
}

export function tooltipText(): string {
  return ensureBox().textContent ?? '';
}
